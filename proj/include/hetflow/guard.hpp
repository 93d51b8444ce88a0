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

#include <memory>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hetflow {

// A node output: text, or std::nullopt for the ABSENT marker.
using Value = std::optional<std::string>;

class GuardError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Edge predicate over the source node's output.
///
/// Grammar:
///   guard     := negation* predicate
///   negation  := '!' | 'not'
///   predicate := 'contains' '(' string ')'
///              | 'matches'  '(' string ')'
///              | 'equals'   '(' string ')'
///              | 'is_absent' '(' ')'
///   string    := '"' chars '"' | '\'' chars '\''   (backslash escapes \" \' \\ \n \t)
///
/// `matches` uses ECMAScript regex search semantics; anchor with ^ and $ for a
/// full match. Text predicates are false on ABSENT.
class Guard {
public:
    enum class Predicate { kContains, kMatches, kEquals, kIsAbsent };

    static Guard parse(std::string_view text);

    bool evaluate(const Value& source_output) const;

    Predicate predicate() const { return predicate_; }
    const std::string& argument() const { return argument_; }
    bool negated() const { return negated_; }

private:
    Predicate predicate_ = Predicate::kIsAbsent;
    std::string argument_;
    bool negated_ = false;
    std::shared_ptr<const std::regex> regex_;
};

}  // namespace hetflow
