// Copyright 2026 The hetflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hetflow {

// Shortest "%.*g" rendering with `digits` significant digits.
std::string format_real(double value, int digits = 10);

// Replaces every @@key@@ in `text`; unknown keys are left in place.
std::string fill_slots(std::string_view text, const std::vector<std::pair<std::string, std::string>>& slots);

}  // namespace hetflow
