#pragma once

// Parent side of the code-execution shim: a child process that reads one JSON
// request per line on stdin and answers one JSON result per line on stdout.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/error.hpp"
#include "halo/grading.hpp"

extern char** environ;

namespace halo {

struct ExecRequest {
  std::string solution_source;
  std::string test_source;
  std::string entry_point;
  double timeout_s = 10.0;

  nlohmann::json to_json() const {
    return {{"solution_source", solution_source},
            {"test_source", test_source},
            {"entry_point", entry_point},
            {"timeout_s", timeout_s}};
  }
};

struct ExecResult {
  CodeVerdict status = CodeVerdict::Error;
  std::string detail;
};

/// Splits a command line on whitespace (no quoting).
inline std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> argv;
  for (std::string part; in >> part;) argv.push_back(part);
  return argv;
}

/// Shim command from HALO_SHIM, else `halo-exec-shim` on PATH.
inline std::vector<std::string> default_shim_command() {
  if (const char* env = std::getenv("HALO_SHIM"); env && *env) return split_command(env);
  return {"halo-exec-shim"};
}

class ShimClient {
 public:
  /// Extra time the parent waits beyond the request timeout before killing the shim.
  static constexpr std::chrono::seconds kGrace{2};

  explicit ShimClient(std::vector<std::string> argv) : argv_(std::move(argv)) {}
  ShimClient(const ShimClient&) = delete;
  ShimClient& operator=(const ShimClient&) = delete;
  ~ShimClient() { stop(); }

  ExecResult run(const ExecRequest& request) {
    start();
    const std::string line = request.to_json().dump() + "\n";
    if (!write_all(line)) {
      bool answered = answered_;
      stop();
      if (!answered) throw Error(Errc::ShimUnavailable, "shim closed its input before the first request");
      return {CodeVerdict::Error, "shim closed its input"};
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<long long>(request.timeout_s * 1000)) + kGrace;
    std::string reply;
    switch (read_line(deadline, reply)) {
      case ReadStatus::Line:
        break;
      case ReadStatus::Deadline:
        stop();
        return {CodeVerdict::Timeout, "shim gave no answer within the timeout plus grace"};
      case ReadStatus::Closed: {
        bool answered = answered_;
        stop();
        if (!answered) throw Error(Errc::ShimUnavailable, "shim exited before answering: " + command_string());
        return {CodeVerdict::Error, "shim exited while running a request"};
      }
    }
    answered_ = true;
    auto j = nlohmann::json::parse(reply, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("status")) {
      return {CodeVerdict::Error, "malformed shim reply: " + reply.substr(0, 200)};
    }
    ExecResult result;
    try {
      result.status = parse_code_verdict(j.at("status").get<std::string>());
    } catch (const std::exception& e) {
      return {CodeVerdict::Error, e.what()};
    }
    result.detail = j.value("detail", std::string{});
    return result;
  }

 private:
  enum class ReadStatus { Line, Deadline, Closed };

  std::string command_string() const {
    std::string s;
    for (const auto& a : argv_) s += (s.empty() ? "" : " ") + a;
    return s;
  }

  void start() {
    if (pid_ > 0) return;
    if (argv_.empty()) throw Error(Errc::ShimUnavailable, "no shim command configured");
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(Errc::ShimUnavailable, std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(Errc::ShimUnavailable, std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child[1]);
    posix_spawn_file_actions_addclose(&actions, from_child[0]);

    std::vector<char*> argv;
    for (auto& a : argv_) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = -1;
    int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      throw Error(Errc::ShimUnavailable, "cannot start '" + command_string() + "': " + std::strerror(rc));
    }
    pid_ = pid;
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    buffer_.clear();
  }

  void stop() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0) ::close(out_fd_);
    in_fd_ = out_fd_ = -1;
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }

  bool write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      auto n = ::write(in_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  ReadStatus read_line(std::chrono::steady_clock::time_point deadline, std::string& line) {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return ReadStatus::Line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadStatus::Deadline;
      pollfd pfd{out_fd_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc == 0) return ReadStatus::Deadline;
      char chunk[4096];
      auto n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return ReadStatus::Closed;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::vector<std::string> argv_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  bool answered_ = false;
  std::string buffer_;
};

/// Runs a candidate solution against its unit tests through the shim.
inline CodeVerdict grade_code(ShimClient& shim, const std::string& predicted_source, const std::string& test_source,
                              const std::string& entry_point, double timeout_s = 10.0) {
  return shim.run(ExecRequest{predicted_source, test_source, entry_point, timeout_s}).status;
}

}  // namespace halo
