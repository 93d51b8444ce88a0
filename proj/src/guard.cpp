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

#include "hetflow/guard.hpp"

#include <cctype>

namespace hetflow {

namespace {

class Cursor {
public:
    explicit Cursor(std::string_view text) : text_(text) {}

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool done() {
        skip_space();
        return pos_ >= text_.size();
    }

    bool consume(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string identifier() {
        skip_space();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string string_literal() {
        skip_space();
        if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
            fail("expected string literal");
        const char quote = text_[pos_++];
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != quote) {
            char c = text_[pos_++];
            if (c == '\\') {
                if (pos_ >= text_.size()) fail("dangling escape");
                char e = text_[pos_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '\\':
                    case '"':
                    case '\'': out += e; break;
                    default: fail(std::string("unknown escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        if (pos_ >= text_.size()) fail("unterminated string literal");
        ++pos_;
        return out;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw GuardError("guard '" + std::string(text_) + "' at offset " + std::to_string(pos_) +
                         ": " + what);
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Guard Guard::parse(std::string_view text) {
    Cursor cur(text);
    Guard g;
    std::string name;
    for (;;) {
        if (cur.consume('!')) {
            g.negated_ = !g.negated_;
            continue;
        }
        name = cur.identifier();
        if (name == "not") {
            g.negated_ = !g.negated_;
            continue;
        }
        break;
    }
    if (name.empty()) cur.fail("expected predicate name");
    if (!cur.consume('(')) cur.fail("expected '('");

    if (name == "is_absent") {
        g.predicate_ = Predicate::kIsAbsent;
    } else {
        if (name == "contains")
            g.predicate_ = Predicate::kContains;
        else if (name == "matches")
            g.predicate_ = Predicate::kMatches;
        else if (name == "equals")
            g.predicate_ = Predicate::kEquals;
        else
            cur.fail("unknown predicate '" + name + "'");
        g.argument_ = cur.string_literal();
    }
    if (!cur.consume(')')) cur.fail("expected ')'");
    if (!cur.done()) cur.fail("trailing characters");

    if (g.predicate_ == Predicate::kMatches) {
        try {
            g.regex_ = std::make_shared<const std::regex>(g.argument_, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw GuardError("guard '" + std::string(text) + "': invalid regex: " + e.what());
        }
    }
    return g;
}

bool Guard::evaluate(const Value& v) const {
    bool result = false;
    switch (predicate_) {
        case Predicate::kIsAbsent: result = !v.has_value(); break;
        case Predicate::kContains: result = v && v->find(argument_) != std::string::npos; break;
        case Predicate::kEquals: result = v && *v == argument_; break;
        case Predicate::kMatches: result = v && std::regex_search(*v, *regex_); break;
    }
    return negated_ ? !result : result;
}

}  // namespace hetflow
