/* Copyright 2026 The pipetile Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PIPETILE_EXTENSION_H_
#define PIPETILE_EXTENSION_H_

#include "pipetile/schedule.h"

namespace pipetile {

// Repeats the annotated repetend until the plan covers `num_microbatches`:
// copy k is shifted by k periods with indices +k, and the cooldown follows
// the last copy. Works on base and already-extended plans. Throws
// MissingAnnotation without a structural annotation and InvalidArgument
// when num_microbatches is below the base count.
Schedule extend(const Schedule& s, int num_microbatches);

}  // namespace pipetile

#endif  // PIPETILE_EXTENSION_H_
