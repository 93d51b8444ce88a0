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

#include "hetflow/text.hpp"

#include <cstdio>

namespace hetflow {

std::string format_real(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

std::string fill_slots(std::string_view text, const std::vector<std::pair<std::string, std::string>>& slots) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto open = text.find("@@", i);
        if (open == std::string_view::npos) break;
        const auto close = text.find("@@", open + 2);
        if (close == std::string_view::npos) break;
        const std::string_view key = text.substr(open + 2, close - open - 2);
        const std::pair<std::string, std::string>* hit = nullptr;
        for (const auto& s : slots)
            if (s.first == key) hit = &s;
        out.append(text.substr(i, open - i));
        if (hit) {
            out += hit->second;
            i = close + 2;
        } else {
            out += "@@";
            i = open + 2;
        }
    }
    out.append(text.substr(i));
    return out;
}

}  // namespace hetflow
