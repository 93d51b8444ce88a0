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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hetflow {

struct SandboxLimits {
    double wall_time_cap = 10.0;               // seconds
    std::size_t memory_cap = 512u << 20;       // bytes of address space
    std::size_t output_cap = 1u << 20;         // bytes of stdout

    /// Throws std::invalid_argument unless every limit is positive.
    void check() const;
};

struct SandboxConfig {
    // The script source is appended as the final argument. The child
    // environment is replaced wholesale, so -s (no user site) is enough;
    // -I would also drop PYTHONHASHSEED and make hash() vary between runs.
    std::vector<std::string> interpreter{"python3", "-s", "-c"};
    // Receives the source on stdin; exit status 0 means it parses.
    std::vector<std::string> syntax_check{"python3", "-s", "-c",
                                          "import ast, sys\nast.parse(sys.stdin.read())"};
    // Try to detach the child from the network namespace. Silently skipped
    // when the host does not permit unprivileged namespaces.
    bool isolate_network = true;
};

class SandboxUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RunStatus { kOk, kTimeout, kMemoryExceeded, kNonzeroExit, kOutputExceeded };

std::string_view to_string(RunStatus status);

struct ProcessResult {
    RunStatus status = RunStatus::kOk;
    int exit_code = 0;
    int term_signal = 0;
    std::string out;
    std::string err;  // truncated excerpt
    double wall_time = 0.0;
};

/// Runs untrusted scripts in a fresh subprocess per call: own process group,
/// address-space, CPU and file-size limits, a scrubbed environment with a fixed
/// hash seed, and a wall-clock deadline after which the whole group is killed.
/// Reentrant; each call owns its child.
class Sandbox {
public:
    /// Throws SandboxUnavailable if the interpreter cannot be found.
    explicit Sandbox(SandboxConfig config = {});

    ProcessResult run(std::string_view source, std::string_view input, const SandboxLimits& limits) const;

    /// Returns the parser's message when `source` does not parse, else nullopt.
    std::optional<std::string> syntax_error(std::string_view source) const;

    const SandboxConfig& config() const { return config_; }

private:
    ProcessResult spawn(const std::vector<std::string>& argv, std::string_view input,
                        const SandboxLimits& limits) const;

    SandboxConfig config_;
    std::string interpreter_path_;
    std::string checker_path_;
};

}  // namespace hetflow
