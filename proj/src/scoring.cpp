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

#include "hetflow/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

namespace hetflow {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

void RewardWeights::check() const {
    if (!(lambda_perf > 0) || !(lambda_cost > 0) || !(lambda_time > 0) || !(alpha_cost > 0) ||
        !(alpha_time > 0))
        throw std::invalid_argument("RewardWeights: all weights must be strictly positive");
}

double utility(double x, double alpha) {
    if (!(x >= 0.0)) throw std::invalid_argument("utility: x must be non-negative");
    if (!(alpha > 0.0)) throw std::invalid_argument("utility: alpha must be positive");
    return 1.0 / (1.0 + alpha * x);
}

double composite_reward(const QueryMetrics& m, const RewardWeights& w) {
    return w.lambda_perf * m.score + w.lambda_cost * utility(m.cost, w.alpha_cost) +
           w.lambda_time * utility(m.latency, w.alpha_time);
}

double aggregate_reward(std::span<const QueryMetrics> metrics, const RewardWeights& w) {
    if (metrics.empty()) throw std::invalid_argument("aggregate_reward: no queries");
    double sum = 0.0;
    for (const auto& m : metrics) sum += composite_reward(m, w);
    return sum / static_cast<double>(metrics.size());
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool strip_wrapper(std::string& s, std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size()));
        return true;
    }
    return false;
}

bool strip_prefix_ci(std::string& s, std::string_view prefix) {
    if (s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == prefix) {
        s = trim(std::string_view(s).substr(prefix.size()));
        return true;
    }
    return false;
}

// cpp_int's string constructor reads a leading zero as an octal prefix.
cpp_int decimal_int(std::string s) {
    bool negative = false;
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
        negative = s[0] == '-';
        s.erase(0, 1);
    }
    s.erase(0, std::min(s.find_first_not_of('0'), s.size() - 1));
    cpp_int v(s);
    return negative ? cpp_int(-v) : v;
}

std::optional<cpp_rational> parse_rational_value(const std::string& s) {
    static const std::regex kDecimal(R"(^([+-])?(\d{1,3}(?:,\d{3})+|\d+)?(?:\.(\d+))?$)");
    static const std::regex kFraction(R"(^([+-]?\d+)\s*/\s*([+-]?\d+)$)");
    static const std::regex kFrac(R"(^([+-])?\\d?frac\{([+-]?\d+)\}\{([+-]?\d+)\}$)");
    std::smatch m;
    if (std::regex_match(s, m, kDecimal) && (m[2].matched || m[3].matched)) {
        std::string whole = m[2].matched ? m[2].str() : "0";
        whole.erase(std::remove(whole.begin(), whole.end(), ','), whole.end());
        const std::string frac = m[3].matched ? m[3].str() : "";
        cpp_int num = decimal_int(whole + frac);
        cpp_int den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        if (m[1].matched && m[1].str() == "-") num = -num;
        return cpp_rational(num, den);
    }
    if (std::regex_match(s, m, kFraction)) {
        cpp_int num = decimal_int(m[1].str()), den = decimal_int(m[2].str());
        if (den == 0) return std::nullopt;
        return cpp_rational(num, den);
    }
    if (std::regex_match(s, m, kFrac)) {
        cpp_int num = decimal_int(m[2].str()), den = decimal_int(m[3].str());
        if (den == 0) return std::nullopt;
        cpp_rational r(num, den);
        if (m[1].matched && m[1].str() == "-") r = -r;
        return r;
    }
    return std::nullopt;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
    std::string s = trim(text);
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        for (auto prefix : {"final answer:", "the final answer is", "the answer is", "answer:"})
            changed |= strip_prefix_ci(s, prefix);
        if (s.rfind("**", 0) == 0) {
            const auto close = s.find("**", 2);
            if (close != std::string::npos) {
                s = trim(s.substr(2, close - 2) + s.substr(close + 2));
                changed = true;
            }
        }
        changed |= strip_wrapper(s, "\\boxed{", "}");
        changed |= strip_wrapper(s, "$$", "$$");
        changed |= strip_wrapper(s, "$", "$");
        changed |= strip_wrapper(s, "**", "**");
        changed |= strip_wrapper(s, "\\(", "\\)");
        if (!s.empty() && s.back() == '.' && !(s.size() >= 2 && s[s.size() - 2] == '.')) {
            s.pop_back();
            s = trim(s);
            changed = true;
        }
    }
    std::string out;
    bool space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            space = true;
        } else {
            if (space && !out.empty()) out += ' ';
            space = false;
            out += static_cast<char>(c);
        }
    }
    return out;
}

std::optional<std::string> parse_rational(std::string_view text) {
    auto r = parse_rational_value(normalize_answer(text));
    if (!r) return std::nullopt;
    return boost::multiprecision::numerator(*r).str() + "/" + boost::multiprecision::denominator(*r).str();
}

int score_math(std::string_view answer, std::string_view gold) {
    const std::string a = normalize_answer(answer);
    const std::string g = normalize_answer(gold);
    const auto ra = parse_rational_value(a);
    const auto rg = parse_rational_value(g);
    if (ra && rg) return *ra == *rg ? 1 : 0;
    return lower(a) == lower(g) ? 1 : 0;
}

std::string extract_program(std::string_view text) {
    const auto open = text.find("```");
    if (open == std::string_view::npos) return std::string(text);
    auto body = text.find('\n', open);
    if (body == std::string_view::npos) return std::string(text);
    ++body;
    const auto close = text.find("```", body);
    return std::string(text.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

int score_code(std::string_view program, std::span<const TestCase> tests, const Sandbox* sandbox,
               const SandboxLimits& limits) {
    if (tests.empty()) throw std::invalid_argument("score_code: empty test suite");
    if (!sandbox) throw SandboxUnavailable("score_code: no sandbox");
    const std::string source = extract_program(program);
    for (const auto& t : tests) {
        ProcessResult r = sandbox->run(source, t.input, limits);
        if (r.status != RunStatus::kOk) return 0;
        if (trim(r.out) != trim(t.expected)) return 0;
    }
    return 1;
}

}  // namespace hetflow
