#pragma once

// Evaluation backends mapping a configuration to energy efficiency (MB/J).

#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "hetune/boosting.hpp"
#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/features.hpp"
#include "hetune/measurement_log.hpp"
#include "hetune/metrics.hpp"

namespace hetune {

/// Common contract: `evaluate` is deterministic for fixed construction inputs
/// (external commands excepted) and bumps an atomic counter once per call,
/// including calls that throw.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  double evaluate(const Configuration& c) {
    count_.fetch_add(1, std::memory_order_relaxed);
    return do_evaluate(c);
  }

  double operator()(const Configuration& c) { return evaluate(c); }

  std::uint64_t evaluation_count() const noexcept { return count_.load(std::memory_order_relaxed); }

  /// Whether several threads may call evaluate() at once.
  virtual bool concurrent() const noexcept { return true; }

  /// Human-readable provenance, recorded in reports.
  virtual std::string describe() const = 0;

 protected:
  virtual double do_evaluate(const Configuration& c) = 0;

 private:
  std::atomic<std::uint64_t> count_{0};
};

/// Evaluators that synthesize a full raw measurement per configuration.
class MeasuringEvaluator : public Evaluator {
 public:
  virtual RawMeasurement measure(const Configuration& c) const = 0;

 protected:
  double do_evaluate(const Configuration& c) override { return energy_efficiency(measure(c)); }
};

// ---------------------------------------------------------------------------

/// Predicts with a trained boosted model at a fixed workload size.
class ModelEvaluator final : public Evaluator {
 public:
  ModelEvaluator(std::shared_ptr<const BoostedModel> model, ParameterSpace space, double workload_mb)
      : model_(std::move(model)), space_(std::move(space)), workload_mb_(workload_mb) {
    const auto expected = model_feature_names(space_);
    if (model_->feature_names() != expected) {
      std::string got;
      for (const auto& n : model_->feature_names()) got += (got.empty() ? "" : ",") + n;
      throw FeatureMismatch("model features [" + got + "] do not match space '" + space_.name() + "'");
    }
  }

  const BoostedModel& model() const noexcept { return *model_; }
  double workload_mb() const noexcept { return workload_mb_; }

  std::string describe() const override {
    return "model(workload_mb=" + format_double(workload_mb_) + ", stages=" + std::to_string(model_->stages().size()) + ")";
  }

 protected:
  double do_evaluate(const Configuration& c) override {
    if (c.values.size() != space_.size()) throw FeatureMismatch("configuration arity does not match the model's space");
    return model_->predict(model_features(space_, c, workload_mb_));
  }

 private:
  std::shared_ptr<const BoostedModel> model_;
  ParameterSpace space_;
  double workload_mb_;
};

// ---------------------------------------------------------------------------

/// Looks configurations up in a recorded measurement log. Optional label
/// filter selects one workload from a multi-workload log.
class ReplayEvaluator final : public Evaluator {
 public:
  ReplayEvaluator(ParameterSpace space, MeasurementLog log, std::optional<std::string> label = std::nullopt)
      : space_(std::move(space)), label_(std::move(label)) {
    for (auto& r : log.rows) {
      if (label_ && r.label != *label_) continue;
      auto& slot = index_[r.measurement.config];
      slot.push_back(rows_.size());
      rows_.push_back(std::move(r.measurement));
    }
  }

  /// Row recorded for `c`. Throws NotRecorded or AmbiguousRecord.
  const RawMeasurement& lookup(const Configuration& c) const {
    auto it = index_.find(c);
    if (it == index_.end()) throw NotRecorded("configuration not recorded: " + format_configuration(space_, c));
    if (it->second.size() > 1)
      throw AmbiguousRecord(std::to_string(it->second.size()) + " rows recorded for " + format_configuration(space_, c));
    return rows_[it->second.front()];
  }

  std::size_t size() const noexcept { return rows_.size(); }

  std::string describe() const override {
    return "replay(rows=" + std::to_string(rows_.size()) + (label_ ? ", label=" + *label_ : std::string()) + ")";
  }

 protected:
  double do_evaluate(const Configuration& c) override { return derive_all(lookup(c)).energy_efficiency; }

 private:
  ParameterSpace space_;
  std::optional<std::string> label_;
  std::vector<RawMeasurement> rows_;
  std::map<Configuration, std::vector<std::size_t>> index_;
};

// ---------------------------------------------------------------------------

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
};

/// Runs `command` through /bin/sh, capturing stdout and stderr. The child is
/// killed when `timeout` elapses.
inline ProcessResult run_process(const std::string& command, std::chrono::milliseconds timeout) {
  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0) throw ExecutionError(std::string("pipe: ") + std::strerror(errno), "");
  if (pipe(err_pipe) != 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    throw ExecutionError(std::string("pipe: ") + std::strerror(errno), "");
  }
  const pid_t pid = fork();
  if (pid < 0) throw ExecutionError(std::string("fork: ") + std::strerror(errno), "");
  if (pid == 0) {
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(err_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);
    setpgid(0, 0);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(out_pipe[1]);
  close(err_pipe[1]);

  ProcessResult r;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      r.timed_out = true;
      kill(-pid, SIGKILL);
      break;
    }
    const int ready = poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (int k = 0; k < 2; ++k) {
      if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const auto n = read(fds[k].fd, buf, sizeof buf);
      if (n > 0) {
        (k == 0 ? r.out : r.err).append(buf, static_cast<std::size_t>(n));
      } else {
        close(fds[k].fd);
        fds[k].fd = -1;
        --open_fds;
      }
    }
  }
  for (auto& f : fds)
    if (f.fd >= 0) close(f.fd);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!r.timed_out) r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

/// Template with "{PARAM-NAME}" placeholders. Unknown names are rejected when
/// the template is built.
class CommandTemplate {
 public:
  CommandTemplate(std::string text, const ParameterSpace& space) : text_(std::move(text)) {
    std::size_t at = 0;
    while ((at = text_.find('{', at)) != std::string::npos) {
      const auto close = text_.find('}', at);
      if (close == std::string::npos) throw SpaceError("unterminated placeholder in command template");
      space.require(std::string_view(text_).substr(at + 1, close - at - 1));
      at = close + 1;
    }
  }

  std::string render(const ParameterSpace& space, const Configuration& c) const {
    std::string out;
    std::size_t at = 0;
    while (true) {
      const auto open = text_.find('{', at);
      if (open == std::string::npos) break;
      const auto close = text_.find('}', open);
      out.append(text_, at, open - at);
      const auto i = space.require(std::string_view(text_).substr(open + 1, close - open - 1));
      out += space.parameter(i).format(c.values[i]);
      at = close + 1;
    }
    out.append(text_, at, std::string::npos);
    return out;
  }

  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

struct CommandOptions {
  std::chrono::milliseconds timeout{60'000};
  std::size_t max_parallel = 1;
  /// Appends every successful row here (header written when the file is empty).
  std::string log_path;
};

/// Runs an external program per configuration and parses the measurement row
/// it prints on stdout (last parsable line wins). The parsed row is stored
/// under the requested configuration.
class CommandEvaluator final : public Evaluator {
 public:
  CommandEvaluator(ParameterSpace space, const std::string& command_template, CommandOptions options = {})
      : space_(std::move(space)),
        template_(command_template, space_),
        options_(std::move(options)),
        slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_parallel))) {}

  std::string render(const Configuration& c) const { return template_.render(space_, c); }

  /// Rows gathered so far, in completion order.
  std::vector<RawMeasurement> recorded() const {
    std::lock_guard lock(mutex_);
    return recorded_;
  }

  bool concurrent() const noexcept override { return true; }

  std::string describe() const override { return "cmd(" + template_.text() + ")"; }

  RawMeasurement run(const Configuration& c) {
    const auto command = render(c);
    slots_.acquire();
    ProcessResult r;
    try {
      r = run_process(command, options_.timeout);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();
    const auto captured = r.out + r.err;
    if (r.timed_out) throw ExecutionError("command timed out: " + command, captured);
    if (r.exit_code != 0) throw ExecutionError("command exited with status " + std::to_string(r.exit_code) + ": " + command, captured);

    RawMeasurement m;
    bool found = false;
    std::size_t start = 0;
    while (start < r.out.size()) {
      auto end = r.out.find('\n', start);
      if (end == std::string::npos) end = r.out.size();
      RawMeasurement row;
      if (try_parse_measurement_row(space_, std::string_view(r.out).substr(start, end - start), row)) {
        m = std::move(row);
        found = true;
      }
      start = end + 1;
    }
    if (!found) throw ExecutionError("no measurement row in command output: " + command, captured);
    m.config = c;
    record(m);
    return m;
  }

 protected:
  double do_evaluate(const Configuration& c) override { return energy_efficiency(run(c)); }

 private:
  void record(const RawMeasurement& m) {
    std::lock_guard lock(mutex_);
    recorded_.push_back(m);
    if (options_.log_path.empty()) return;
    bool empty = true;
    {
      std::ifstream probe(options_.log_path, std::ios::ate);
      empty = !probe || probe.tellg() == 0;
    }
    std::ofstream out(options_.log_path, std::ios::app);
    if (!out) throw ExecutionError("cannot append to " + options_.log_path, "");
    if (empty) out << log_header(space_) << '\n';
    out << format_measurement_row(space_, m) << '\n';
  }

  ParameterSpace space_;
  CommandTemplate template_;
  CommandOptions options_;
  std::counting_semaphore<1 << 16> slots_;
  mutable std::mutex mutex_;
  std::vector<RawMeasurement> recorded_;
};

}  // namespace hetune
