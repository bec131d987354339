#pragma once

// Black-box objectives implemented by an external worker process.
//
// Protocol: newline-delimited JSON over the worker's stdin/stdout. For every
// evaluation the driver writes one request line {"x": [f, ...]} and reads one
// response line, either {"y": f} or {"error": "message"}. Requests are
// strictly sequential. In persistent mode one worker serves the whole run; in
// one-shot mode a fresh worker is started per evaluation and its stdin is
// closed after the request. The worker's stderr is inherited.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gpopt/error.hpp"
#include "gpopt/loop.hpp"

extern char** environ;

namespace gpopt {

enum class WorkerMode { Persistent, OneShot };

struct ExternalSpec {
  std::vector<std::string> command;  // program followed by its arguments
  WorkerMode mode = WorkerMode::Persistent;
  std::chrono::milliseconds timeout{30000};
};

namespace detail {

inline constexpr std::size_t kMaxResponseBytes = 1 << 20;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw ObjectiveError(ObjectiveErrorKind::WorkerCrash, std::string("pipe: ") + std::strerror(errno));
  return {Fd(fds[0]), Fd(fds[1])};
}

// One child process with its stdin/stdout connected to pipes.
class WorkerProcess {
 public:
  explicit WorkerProcess(const std::vector<std::string>& command) {
    if (command.empty() || command.front().empty())
      throw InvalidArgument("external objective command must be non-empty");
    // Writes to a dead worker must report EPIPE instead of killing us.
    ::signal(SIGPIPE, SIG_IGN);

    auto [child_in, parent_out] = make_pipe();
    auto [parent_in, child_out] = make_pipe();

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, child_in.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, child_out.get(), STDOUT_FILENO);

    std::vector<char*> argv;
    for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
    argv.push_back(nullptr);

    const int rc = ::posix_spawnp(&pid_, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
      pid_ = -1;
      throw ObjectiveError(ObjectiveErrorKind::WorkerCrash,
                           "cannot start worker '" + command.front() + "': " + std::strerror(rc));
    }
    to_child_ = std::move(parent_out);
    from_child_ = std::move(parent_in);
  }

  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  ~WorkerProcess() { terminate(); }

  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(to_child_.get(), data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ObjectiveError(ObjectiveErrorKind::WorkerCrash, std::string("writing request: ") + std::strerror(errno) +
                                                                   exit_description());
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void close_stdin() { to_child_.reset(); }

  // Reads one LF-terminated line, waiting at most until `deadline`.
  std::string read_line(std::chrono::steady_clock::time_point deadline) {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buffer_.size() > kMaxResponseBytes)
        throw ObjectiveError(ObjectiveErrorKind::Protocol, "response line exceeds 1 MiB");

      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) throw ObjectiveError(ObjectiveErrorKind::Timeout, "no response before the deadline");
      const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
      pollfd pfd{from_child_.get(), POLLIN, 0};
      const int pr = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(wait, 1 << 30)));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw ObjectiveError(ObjectiveErrorKind::WorkerCrash, std::string("poll: ") + std::strerror(errno));
      }
      if (pr == 0) continue;

      char chunk[4096];
      const ssize_t n = ::read(from_child_.get(), chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ObjectiveError(ObjectiveErrorKind::WorkerCrash, std::string("reading response: ") + std::strerror(errno));
      }
      if (n == 0) {
        throw ObjectiveError(ObjectiveErrorKind::WorkerCrash,
                             "worker closed its output before responding" + exit_description());
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  // Closes pipes, gives the worker a short grace period, then kills it.
  void terminate() noexcept {
    to_child_.reset();
    from_child_.reset();
    if (pid_ <= 0) return;
    for (int i = 0; i < 20; ++i) {
      if (reap(WNOHANG)) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ::kill(pid_, SIGKILL);
    reap(0);
  }

  void kill_now() noexcept {
    if (pid_ > 0) ::kill(pid_, SIGKILL);
    terminate();
  }

 private:
  bool reap(int flags) noexcept {
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, flags);
    if (r == pid_ || (r < 0 && errno == ECHILD)) {
      status_ = status;
      pid_ = -1;
      return true;
    }
    return false;
  }

  std::string exit_description() {
    if (pid_ > 0) {
      for (int i = 0; i < 20 && !reap(WNOHANG); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (pid_ > 0) return "";
    if (WIFEXITED(status_)) return " (worker exited with status " + std::to_string(WEXITSTATUS(status_)) + ")";
    if (WIFSIGNALED(status_)) return " (worker killed by signal " + std::to_string(WTERMSIG(status_)) + ")";
    return "";
  }

  pid_t pid_ = -1;
  int status_ = 0;
  Fd to_child_;
  Fd from_child_;
  std::string buffer_;
};

inline std::string make_request(const Eigen::Ref<const Eigen::VectorXd>& x) {
  nlohmann::json req;
  req["x"] = std::vector<double>(x.data(), x.data() + x.size());
  return req.dump() + "\n";
}

}  // namespace detail

/// Parses one response line. Throws ObjectiveError (Protocol, WorkerReported
/// or NonFinite).
inline double parse_worker_response(const std::string& line) {
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    // Common JSON writers emit NaN, Infinity or an overflowing literal for
    // non-finite floats; report those as such rather than as garbage.
    static const std::regex non_finite(R"re(^\s*\{\s*"y"\s*:\s*(-?Infinity|NaN|-?[0-9][0-9.eE+-]*)\s*\}\s*$)re");
    std::smatch m;
    if (std::regex_match(line, m, non_finite)) {
      const std::string tok = m[1].str();
      if (tok.find_first_of("IN") != std::string::npos || !std::isfinite(std::strtod(tok.c_str(), nullptr)))
        throw ObjectiveError(ObjectiveErrorKind::NonFinite, "worker returned a non-finite value");
    }
    throw ObjectiveError(ObjectiveErrorKind::Protocol, "malformed response '" + line.substr(0, 200) + "'");
  }
  if (!msg.is_object()) throw ObjectiveError(ObjectiveErrorKind::Protocol, "response is not a JSON object");
  if (auto it = msg.find("error"); it != msg.end()) {
    throw ObjectiveError(ObjectiveErrorKind::WorkerReported, it->is_string() ? it->get<std::string>() : it->dump());
  }
  auto it = msg.find("y");
  if (it == msg.end() || !it->is_number())
    throw ObjectiveError(ObjectiveErrorKind::Protocol, "response lacks a numeric \"y\": '" + line.substr(0, 200) + "'");
  const double y = it->get<double>();
  if (!std::isfinite(y)) throw ObjectiveError(ObjectiveErrorKind::NonFinite, "worker returned a non-finite value");
  return y;
}

/// Objective backed by an external worker process. Not copyable; wrap with
/// make_external_objective to obtain an Objective.
class ExternalObjective {
 public:
  explicit ExternalObjective(ExternalSpec spec) : spec_(std::move(spec)) {
    if (spec_.command.empty() || spec_.command.front().empty())
      throw InvalidArgument("external objective command must be non-empty");
    if (spec_.timeout.count() <= 0) throw InvalidArgument("external objective timeout must be positive");
  }

  /// Sends one request and waits for the matching response.
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (!x.allFinite()) throw InvalidArgument("objective input must be finite");
    ++requests_;
    const auto deadline = std::chrono::steady_clock::now() + spec_.timeout;
    if (spec_.mode == WorkerMode::OneShot) {
      detail::WorkerProcess worker(spec_.command);
      return exchange(worker, x, deadline, true);
    }
    if (!worker_) worker_ = std::make_unique<detail::WorkerProcess>(spec_.command);
    return exchange(*worker_, x, deadline, false);
  }

  double operator()(const Eigen::VectorXd& x) { return evaluate(x); }

  std::size_t requests_sent() const noexcept { return requests_; }
  const ExternalSpec& spec() const noexcept { return spec_; }

 private:
  double exchange(detail::WorkerProcess& worker, const Eigen::Ref<const Eigen::VectorXd>& x,
                  std::chrono::steady_clock::time_point deadline, bool one_shot) {
    try {
      worker.write_all(detail::make_request(x));
      if (one_shot) worker.close_stdin();
      return parse_worker_response(worker.read_line(deadline));
    } catch (const ObjectiveError& e) {
      // A worker in an unknown state cannot serve the next request.
      if (e.kind() != ObjectiveErrorKind::WorkerReported && e.kind() != ObjectiveErrorKind::NonFinite) {
        worker.kill_now();
        if (!one_shot) worker_.reset();
      }
      throw;
    }
  }

  ExternalSpec spec_;
  std::unique_ptr<detail::WorkerProcess> worker_;
  std::size_t requests_ = 0;
};

inline Objective make_external_objective(ExternalSpec spec) {
  auto external = std::make_shared<ExternalObjective>(std::move(spec));
  return [external](const Eigen::VectorXd& x) { return external->evaluate(x); };
}

}  // namespace gpopt
