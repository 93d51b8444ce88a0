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

#include "hetflow/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <thread>

namespace hetflow {

namespace {

constexpr std::size_t kStderrExcerpt = 4096;

std::string resolve_executable(const std::string& name) {
    namespace fs = std::filesystem;
    if (name.find('/') != std::string::npos) return access(name.c_str(), X_OK) == 0 ? name : "";
    const char* path = std::getenv("PATH");
    std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
    std::size_t start = 0;
    while (start <= dirs.size()) {
        std::size_t end = dirs.find(':', start);
        if (end == std::string::npos) end = dirs.size();
        fs::path candidate = fs::path(dirs.substr(start, end - start)) / name;
        if (access(candidate.c_str(), X_OK) == 0) return candidate.string();
        start = end + 1;
    }
    return "";
}

void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] {
        struct sigaction sa {};
        sa.sa_handler = SIG_IGN;
        sigemptyset(&sa.sa_mask);
        sigaction(SIGPIPE, &sa, nullptr);
    });
}

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

void make_pipe(Fd& read_end, Fd& write_end) {
    int fds[2];
    if (pipe2(fds, O_CLOEXEC) != 0) throw SandboxUnavailable(std::string("pipe2: ") + std::strerror(errno));
    read_end.fd = fds[0];
    write_end.fd = fds[1];
}

void set_nonblocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK); }

}  // namespace

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::kOk: return "ok";
        case RunStatus::kTimeout: return "timeout";
        case RunStatus::kMemoryExceeded: return "memory-exceeded";
        case RunStatus::kNonzeroExit: return "nonzero-exit";
        case RunStatus::kOutputExceeded: return "output-exceeded";
    }
    return "unknown";
}

void SandboxLimits::check() const {
    if (!(wall_time_cap > 0.0) || memory_cap == 0 || output_cap == 0)
        throw std::invalid_argument("SandboxLimits: all limits must be positive");
}

Sandbox::Sandbox(SandboxConfig config) : config_(std::move(config)) {
    if (config_.interpreter.empty()) throw SandboxUnavailable("no interpreter configured");
    interpreter_path_ = resolve_executable(config_.interpreter.front());
    if (interpreter_path_.empty())
        throw SandboxUnavailable("interpreter '" + config_.interpreter.front() + "' not found");
    if (!config_.syntax_check.empty()) checker_path_ = resolve_executable(config_.syntax_check.front());
    ignore_sigpipe_once();
}

ProcessResult Sandbox::run(std::string_view source, std::string_view input, const SandboxLimits& limits) const {
    std::vector<std::string> argv = config_.interpreter;
    argv.front() = interpreter_path_;
    argv.emplace_back(source);
    return spawn(argv, input, limits);
}

std::optional<std::string> Sandbox::syntax_error(std::string_view source) const {
    if (config_.syntax_check.empty() || checker_path_.empty()) return std::nullopt;
    std::vector<std::string> argv = config_.syntax_check;
    argv.front() = checker_path_;
    SandboxLimits limits;
    limits.wall_time_cap = 10.0;
    ProcessResult r = spawn(argv, source, limits);
    if (r.status == RunStatus::kOk) return std::nullopt;
    std::string msg = r.err;
    while (!msg.empty() && (msg.back() == '\n' || msg.back() == ' ')) msg.pop_back();
    if (auto nl = msg.rfind('\n'); nl != std::string::npos) msg = msg.substr(nl + 1);
    return msg.empty() ? std::string(to_string(r.status)) : msg;
}

ProcessResult Sandbox::spawn(const std::vector<std::string>& args, std::string_view input,
                             const SandboxLimits& limits) const {
    limits.check();

    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    static const char* const kEnv[] = {"PATH=/usr/local/bin:/usr/bin:/bin", "PYTHONHASHSEED=0",
                                       "PYTHONDONTWRITEBYTECODE=1", "LANG=C.UTF-8", "LC_ALL=C.UTF-8",
                                       "HOME=/nonexistent", nullptr};

    Fd in_r, in_w, out_r, out_w, err_r, err_w;
    make_pipe(in_r, in_w);
    make_pipe(out_r, out_w);
    make_pipe(err_r, err_w);

    const rlim_t cpu = static_cast<rlim_t>(std::ceil(limits.wall_time_cap)) + 1;
    const rlim_t mem = static_cast<rlim_t>(limits.memory_cap);
    const bool isolate = config_.isolate_network;

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) throw SandboxUnavailable(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        // Child: async-signal-safe calls only.
        setpgid(0, 0);
        if (isolate) (void)unshare(CLONE_NEWNET);
        struct rlimit rl;
        rl.rlim_cur = rl.rlim_max = mem;
        setrlimit(RLIMIT_AS, &rl);
        rl.rlim_cur = rl.rlim_max = cpu;
        setrlimit(RLIMIT_CPU, &rl);
        rl.rlim_cur = rl.rlim_max = 0;
        setrlimit(RLIMIT_FSIZE, &rl);
        setrlimit(RLIMIT_CORE, &rl);
        dup2(in_r.fd, 0);
        dup2(out_w.fd, 1);
        dup2(err_w.fd, 2);
        if (chdir("/") != 0) _exit(126);
        execve(argv[0], argv.data(), const_cast<char* const*>(kEnv));
        _exit(127);
    }

    in_r.reset();
    out_w.reset();
    err_w.reset();
    set_nonblocking(in_w.fd);
    set_nonblocking(out_r.fd);
    set_nonblocking(err_r.fd);

    ProcessResult result;
    const auto deadline = start + std::chrono::duration<double>(limits.wall_time_cap);
    std::size_t written = 0;
    bool killed_timeout = false, killed_output = false;
    if (input.empty()) in_w.reset();

    auto kill_group = [&] { ::kill(-pid, SIGKILL); ::kill(pid, SIGKILL); };

    char buf[65536];
    while (out_r.fd >= 0 || err_r.fd >= 0) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            killed_timeout = true;
            kill_group();
            break;
        }
        const int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
        pollfd pfds[3];
        int n = 0;
        int idx_in = -1, idx_out = -1, idx_err = -1;
        if (in_w.fd >= 0) { idx_in = n; pfds[n++] = {in_w.fd, POLLOUT, 0}; }
        if (out_r.fd >= 0) { idx_out = n; pfds[n++] = {out_r.fd, POLLIN, 0}; }
        if (err_r.fd >= 0) { idx_err = n; pfds[n++] = {err_r.fd, POLLIN, 0}; }
        int rc = poll(pfds, n, wait_ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            kill_group();
            break;
        }
        if (idx_in >= 0 && pfds[idx_in].revents) {
            if (pfds[idx_in].revents & (POLLERR | POLLHUP)) {
                in_w.reset();
            } else {
                ssize_t w = ::write(in_w.fd, input.data() + written, input.size() - written);
                if (w > 0) written += static_cast<std::size_t>(w);
                if ((w < 0 && errno != EAGAIN) || written == input.size()) in_w.reset();
            }
        }
        if (idx_out >= 0 && pfds[idx_out].revents) {
            ssize_t r = ::read(out_r.fd, buf, sizeof buf);
            if (r > 0) {
                result.out.append(buf, static_cast<std::size_t>(r));
                if (result.out.size() > limits.output_cap) {
                    killed_output = true;
                    kill_group();
                    break;
                }
            } else if (r == 0 || errno != EAGAIN) {
                out_r.reset();
            }
        }
        if (idx_err >= 0 && pfds[idx_err].revents) {
            ssize_t r = ::read(err_r.fd, buf, sizeof buf);
            if (r > 0) {
                if (result.err.size() < kStderrExcerpt)
                    result.err.append(buf, std::min<std::size_t>(static_cast<std::size_t>(r),
                                                                 kStderrExcerpt - result.err.size()));
            } else if (r == 0 || errno != EAGAIN) {
                err_r.reset();
            }
        }
    }
    in_w.reset();

    // Streams closed (or we killed the group); reap, still honoring the deadline.
    int status = 0;
    for (;;) {
        pid_t w = waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) break;
        if (!killed_timeout && !killed_output && std::chrono::steady_clock::now() >= deadline) {
            killed_timeout = true;
            kill_group();
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    ::kill(-pid, SIGKILL);  // stray grandchildren
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    if (WIFSIGNALED(status)) result.term_signal = WTERMSIG(status);

    if (killed_output) {
        result.status = RunStatus::kOutputExceeded;
    } else if (killed_timeout || result.term_signal == SIGXCPU) {
        result.status = RunStatus::kTimeout;
    } else if (result.err.find("MemoryError") != std::string::npos ||
               (result.term_signal == SIGSEGV || result.term_signal == SIGABRT ||
                result.term_signal == SIGKILL)) {
        result.status = RunStatus::kMemoryExceeded;
    } else if (result.term_signal != 0 || result.exit_code != 0) {
        result.status = RunStatus::kNonzeroExit;
    } else {
        result.status = RunStatus::kOk;
    }
    return result;
}

}  // namespace hetflow
