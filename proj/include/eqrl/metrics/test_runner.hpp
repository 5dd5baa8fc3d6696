#pragma once

// Functional correctness: runs a subject program against stdin/stdout tests.
//
// Two execution modes share one contract:
//   spawn       one interpreter process per test, built from interpreter_command.
//   forkserver  one long-lived interpreter runs a small helper that compiles the
//               program once and forks a fresh child per test. Much cheaper per
//               test; requires the interpreter to be CPython on Linux.
// Either way a test passes iff the program exits with status 0 inside the time
// and memory limits and its normalized stdout equals the normalized expected output.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/errors.hpp"
#include "eqrl/hash.hpp"
#include "eqrl/metrics/syntax.hpp"
#include "json.hpp"

namespace eqrl::metrics {

enum class RunnerMode { Spawn, Forkserver };

struct TestRunConfig {
  std::string interpreter_command = "python3 {src}";
  int per_test_timeout_ms = 2000;
  std::size_t memory_limit = 256ull << 20;
  std::string output_normalization = "trailing-ws";  // or "exact"
  RunnerMode mode = RunnerMode::Forkserver;
  std::size_t output_cap = 1u << 20;
  int max_concurrent = 4;  // spawn mode only
  bool cache = true;
  // Forkserver only: run all tests of a program in one forked child with
  // fresh globals per test, falling back to a fork per test if that child dies.
  bool batch = true;
  // Wall-clock budget for one program across all its tests; once spent, the
  // remaining tests count as timed out. 0 disables.
  int program_budget_ms = 0;

  void validate() const {
    if (per_test_timeout_ms <= 0) throw ArgumentError("per_test_timeout must be > 0");
    if (program_budget_ms < 0) throw ArgumentError("program_budget must be >= 0");
    if (interpreter_command.find("{src}") == std::string::npos)
      throw ArgumentError("interpreter_command must contain {src}");
    if (output_normalization != "trailing-ws" && output_normalization != "exact")
      throw ArgumentError("unknown output_normalization: " + output_normalization);
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a(interpreter_command);
    h = hash_combine(h, static_cast<std::uint64_t>(per_test_timeout_ms));
    h = hash_combine(h, memory_limit);
    h = hash_combine(h, fnv1a(output_normalization));
    h = hash_combine(h, batch ? 1 : 0);
    h = hash_combine(h, static_cast<std::uint64_t>(program_budget_ms));
    return hash_combine(h, output_cap);
  }
};

inline RunnerMode parse_runner_mode(std::string_view s) {
  if (s == "spawn") return RunnerMode::Spawn;
  if (s == "forkserver") return RunnerMode::Forkserver;
  throw ArgumentError("unknown runner mode: " + std::string(s));
}

// Strips trailing whitespace on every line and trailing blank lines; CRLF -> LF.
inline std::string normalize_output(std::string_view text, std::string_view rule = "trailing-ws") {
  std::string s = normalize_newlines(text);
  if (rule == "exact") return s;
  std::string out;
  std::istringstream in(s);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    const auto e = line.find_last_not_of(" \t\f\v\r");
    lines.push_back(e == std::string::npos ? std::string{} : line.substr(0, e + 1));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (const auto& l : lines) {
    out += l;
    out.push_back('\n');
  }
  return out;
}

inline std::uint64_t tests_fingerprint(const std::vector<TestCase>& tests) {
  std::uint64_t h = tests.size();
  for (const auto& t : tests) h = hash_combine(hash_combine(h, fnv1a(t.input)), fnv1a(t.expected_output));
  return h;
}

struct ProcessOutcome {
  bool timed_out = false;
  int exit_status = -1;  // -1 if killed by a signal
  std::string stdout_text;
};

namespace detail {

inline void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

inline std::vector<std::string> split_command(std::string_view tmpl, std::string_view src) {
  std::vector<std::string> argv;
  std::istringstream in{std::string(tmpl)};
  std::string w;
  while (in >> w) {
    for (auto p = w.find("{src}"); p != std::string::npos; p = w.find("{src}"))
      w.replace(p, 5, src);
    argv.push_back(w);
  }
  if (argv.empty()) throw ArgumentError("empty interpreter_command");
  return argv;
}

struct Child {
  pid_t pid = -1;
  int in_fd = -1;   // child's stdin (write end)
  int out_fd = -1;  // child's stdout (read end)

  void close_in() {
    if (in_fd >= 0) ::close(in_fd);
    in_fd = -1;
  }
  void close_out() {
    if (out_fd >= 0) ::close(out_fd);
    out_fd = -1;
  }
  int reap(bool kill_first) {
    if (pid < 0) return -1;
    if (kill_first) ::kill(pid, SIGKILL);
    int st = 0;
    while (::waitpid(pid, &st, 0) < 0 && errno == EINTR) {
    }
    pid = -1;
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }
};

// fork/exec with piped stdin/stdout, stderr to /dev/null. Exec failures are
// reported through a close-on-exec pipe and raised as EnvironmentError.
inline Child spawn_child(const std::vector<std::string>& args, std::size_t mem_limit) {
  ignore_sigpipe();
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  int in[2], out[2], err[2];
  if (::pipe2(in, O_CLOEXEC) || ::pipe2(out, O_CLOEXEC) || ::pipe2(err, O_CLOEXEC))
    throw EnvironmentError(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) throw EnvironmentError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::signal(SIGPIPE, SIG_DFL);
    if (mem_limit > 0) {
      rlimit rl{mem_limit, mem_limit};
      ::setrlimit(RLIMIT_AS, &rl);
    }
    ::dup2(in[0], 0);
    ::dup2(out[1], 1);
    const int dn = ::open("/dev/null", O_WRONLY);
    if (dn >= 0) ::dup2(dn, 2);
    ::execvp(argv[0], argv.data());
    const int e = errno;
    [[maybe_unused]] auto r = ::write(err[1], &e, sizeof e);
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  ::close(err[1]);
  int e = 0;
  ssize_t n;
  while ((n = ::read(err[0], &e, sizeof e)) < 0 && errno == EINTR) {
  }
  ::close(err[0]);
  Child c{pid, in[1], out[0]};
  if (n > 0) {
    c.close_in();
    c.close_out();
    c.reap(false);
    throw EnvironmentError("cannot execute '" + args[0] + "': " + std::strerror(e));
  }
  return c;
}

// Feeds `input`, collects stdout up to `cap` bytes, enforces a wall-clock timeout.
inline ProcessOutcome communicate(Child& c, std::string_view input, int timeout_ms, std::size_t cap) {
  ProcessOutcome res;
  ::fcntl(c.in_fd, F_SETFL, O_NONBLOCK);
  std::size_t written = 0;
  if (input.empty()) c.close_in();
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  bool overflow = false;
  char buf[65536];
  while (c.out_fd >= 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                          deadline - std::chrono::steady_clock::now())
                          .count();
    if (left <= 0) {
      res.timed_out = true;
      break;
    }
    pollfd fds[2];
    int nf = 0;
    fds[nf++] = {c.out_fd, POLLIN, 0};
    if (c.in_fd >= 0) fds[nf++] = {c.in_fd, POLLOUT, 0};
    const int pr = ::poll(fds, static_cast<nfds_t>(nf), static_cast<int>(left));
    if (pr < 0 && errno == EINTR) continue;
    if (pr < 0) break;
    if (nf == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(c.in_fd, input.data() + written, input.size() - written);
      if (w > 0) written += static_cast<std::size_t>(w);
      if (w < 0 && errno != EAGAIN) c.close_in();
      if (written >= input.size()) c.close_in();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t r = ::read(c.out_fd, buf, sizeof buf);
      if (r > 0) {
        res.stdout_text.append(buf, static_cast<std::size_t>(r));
        if (res.stdout_text.size() > cap) {
          overflow = true;
          break;
        }
      } else if (r == 0 || errno != EINTR) {
        c.close_out();
      }
    }
  }
  c.close_in();
  c.close_out();
  if (!res.timed_out && !overflow) {
    // stdout is closed but the process may still be running.
    while (c.pid >= 0) {
      int st = 0;
      const pid_t r = ::waitpid(c.pid, &st, WNOHANG);
      if (r == c.pid) {
        c.pid = -1;
        res.exit_status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
        return res;
      }
      if (r < 0 && errno != EINTR) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        res.timed_out = true;
        break;
      }
      ::usleep(500);
    }
  }
  c.reap(true);
  res.exit_status = -1;
  return res;
}

inline std::filesystem::path make_temp_dir() {
  const char* base = std::getenv("TMPDIR");
  std::string tmpl = std::string(base && *base ? base : "/tmp") + "/eqrl-XXXXXX";
  if (!::mkdtemp(tmpl.data())) throw EnvironmentError(std::string("mkdtemp: ") + std::strerror(errno));
  return tmpl;
}

inline constexpr std::string_view kForkserverHelper = R"PY(
import io, json, os, resource, select, signal, sys, time

def run_one(code, data, timeout, mem, cap):
    infd = os.memfd_create("stdin")
    os.write(infd, data)
    os.lseek(infd, 0, 0)
    outfd = os.memfd_create("stdout")
    pid = os.fork()
    if pid == 0:
        status = 1
        try:
            signal.signal(signal.SIGPIPE, signal.SIG_DFL)
            if mem > 0:
                resource.setrlimit(resource.RLIMIT_AS, (mem, mem))
            resource.setrlimit(resource.RLIMIT_FSIZE, (cap + 1, cap + 1))
            os.dup2(infd, 0)
            os.dup2(outfd, 1)
            dn = os.open(os.devnull, os.O_WRONLY)
            os.dup2(dn, 2)
            sys.stdin = io.TextIOWrapper(io.BufferedReader(io.FileIO(0, "r", closefd=False)))
            sys.stdout = io.TextIOWrapper(io.BufferedWriter(io.FileIO(1, "w", closefd=False)))
            sys.stderr = io.TextIOWrapper(io.BufferedWriter(io.FileIO(2, "w", closefd=False)))
            status = 0
            try:
                exec(code, {"__name__": "__main__", "__builtins__": __builtins__})
            except SystemExit as e:
                c = e.code
                status = 0 if c is None else (c if isinstance(c, int) else 1)
            except BaseException:
                status = 1
            try:
                sys.stdout.flush()
            except BaseException:
                status = status or 1
        finally:
            os._exit(status & 0xFF)
    os.close(infd)
    pfd = os.pidfd_open(pid)
    ready, _, _ = select.select([pfd], [], [], timeout)
    timed_out = not ready
    if timed_out:
        os.kill(pid, signal.SIGKILL)
    _, st = os.waitpid(pid, 0)
    os.close(pfd)
    os.lseek(outfd, 0, 0)
    chunks, total = [], 0
    while total <= cap:
        b = os.read(outfd, 65536)
        if not b:
            break
        chunks.append(b)
        total += len(b)
    os.close(outfd)
    out = b"".join(chunks)
    status = os.waitstatus_to_exitcode(st)
    if timed_out or total > cap or status < 0:
        status = -1
    return {"status": status, "timeout": timed_out, "out": out.decode("utf-8", "replace")}

class _Timeout(BaseException):
    pass

_SKIPPED = {"status": -1, "timeout": True, "out": ""}

def _alarm(signum, frame):
    raise _Timeout()

def run_batch(code, inputs, timeout, mem, cap, deadline):
    """Runs inputs in one child; returns the results of the tests that completed.
    The child streams one JSON line per test; a child that makes no progress
    for timeout + 0.5s is killed (signals do not reach every Python loop)."""
    rfd, wfd = os.pipe()
    pid = os.fork()
    if pid == 0:
        try:
            os.close(rfd)
            import builtins
            signal.signal(signal.SIGPIPE, signal.SIG_DFL)
            signal.signal(signal.SIGXFSZ, signal.SIG_IGN)
            signal.signal(signal.SIGALRM, _alarm)
            if mem > 0:
                resource.setrlimit(resource.RLIMIT_AS, (mem, mem))
            resource.setrlimit(resource.RLIMIT_FSIZE, (cap + 1, cap + 1))
            dn = os.open(os.devnull, os.O_WRONLY)
            os.dup2(dn, 2)
            sys.stderr = io.TextIOWrapper(io.BufferedWriter(io.FileIO(2, "w", closefd=False)))
            saved_builtins = dict(builtins.__dict__)
            recursion = sys.getrecursionlimit()
            for data in inputs:
                if deadline > 0 and time.monotonic() > deadline:
                    os._exit(0)
                bd = builtins.__dict__
                for k in [k for k in bd if k not in saved_builtins]:
                    del bd[k]
                bd.update(saved_builtins)
                sys.setrecursionlimit(recursion)
                infd = os.memfd_create("stdin")
                os.write(infd, data)
                os.lseek(infd, 0, 0)
                os.dup2(infd, 0)
                os.close(infd)
                outfd = os.memfd_create("stdout")
                os.dup2(outfd, 1)
                sys.stdin = io.TextIOWrapper(io.BufferedReader(io.FileIO(0, "r", closefd=False)))
                sys.stdout = io.TextIOWrapper(io.BufferedWriter(io.FileIO(1, "w", closefd=False)))
                status, timed_out = 0, False
                try:
                    signal.setitimer(signal.ITIMER_REAL, timeout, 0.05)
                    try:
                        exec(code, {"__name__": "__main__", "__builtins__": builtins})
                    except SystemExit as e:
                        c = e.code
                        status = 0 if c is None else (c if isinstance(c, int) else 1)
                    except _Timeout:
                        timed_out = True
                    except BaseException:
                        status = 1
                    try:
                        sys.stdout.flush()
                    except _Timeout:
                        timed_out = True
                    except BaseException:
                        status = status or 1
                    signal.setitimer(signal.ITIMER_REAL, 0)
                except _Timeout:
                    signal.setitimer(signal.ITIMER_REAL, 0)
                    timed_out = True
                os.lseek(outfd, 0, 0)
                chunks, total = [], 0
                while total <= cap:
                    b = os.read(outfd, 65536)
                    if not b:
                        break
                    chunks.append(b)
                    total += len(b)
                os.close(outfd)
                status &= 0xFF
                if timed_out or total > cap:
                    status = -1
                line = (json.dumps({"status": status, "timeout": timed_out,
                                    "out": b"".join(chunks).decode("utf-8", "replace")})
                        + "\n").encode()
                while line:
                    line = line[os.write(wfd, line):]
            os._exit(0)
        finally:
            os._exit(3)
    os.close(wfd)
    res, buf = [], b""
    last = time.monotonic()
    while True:
        wait = last + timeout + 0.5 - time.monotonic()
        ready = select.select([rfd], [], [], max(wait, 0))[0] if wait > 0 else []
        if not ready:
            os.kill(pid, signal.SIGKILL)
            break
        data = os.read(rfd, 1 << 20)
        if not data:
            break
        buf += data
        *lines, buf = buf.split(b"\n")
        if lines:
            last = time.monotonic()
        for line in lines:
            res.append(json.loads(line))
    os.waitpid(pid, 0)
    os.close(rfd)
    return res[:len(inputs)]

def run_all(code, inputs, req):
    timeout, mem, cap = req["timeout"], req["mem"], req["cap"]
    budget = req.get("budget", 0)
    batch = req.get("batch", False)
    start = time.monotonic()
    res = []
    while len(res) < len(inputs):
        if budget > 0 and time.monotonic() - start > budget:
            res.append(_SKIPPED)
            continue
        if batch:
            deadline = start + budget if budget > 0 else 0
            res.extend(run_batch(code, inputs[len(res):], timeout, mem, cap, deadline))
            if len(res) == len(inputs):
                break
            if budget > 0 and time.monotonic() - start > budget:
                continue
        # the batch child died on this test, or batching is off
        res.append(run_one(code, inputs[len(res)], timeout, mem, cap))
    return res

def main():
    reply = sys.stdout
    for line in sys.stdin:
        req = json.loads(line)
        try:
            code = compile(req["src"], "<subject>", "exec")
        except (SyntaxError, ValueError, OverflowError, RecursionError, MemoryError):
            reply.write(json.dumps({"compiled": False}) + "\n")
            reply.flush()
            continue
        res = run_all(code, [t.encode("utf-8") for t in req["inputs"]], req)
        reply.write(json.dumps({"compiled": True, "results": res}) + "\n")
        reply.flush()

main()
)PY";

}  // namespace detail

class TestRunner {
 public:
  explicit TestRunner(TestRunConfig cfg)
      : cfg_(std::move(cfg)), slots_(std::max(1, cfg_.max_concurrent)) {
    cfg_.validate();
  }
  TestRunner(const TestRunner&) = delete;
  TestRunner& operator=(const TestRunner&) = delete;

  ~TestRunner() {
    stop_helper();
    std::error_code ec;
    if (!workdir_.empty()) std::filesystem::remove_all(workdir_, ec);
  }

  const TestRunConfig& config() const { return cfg_; }

  // Fraction of tests passed. Syntax-invalid programs score 0 without running.
  double run(std::string_view source, const std::vector<TestCase>& tests) {
    if (tests.empty()) throw ArgumentError("run_tests needs at least one test");
    if (!check_syntax(source)) return 0.0;
    const std::uint64_t key = hash_combine(fnv1a(source), tests_fingerprint(tests));
    if (cfg_.cache) {
      std::lock_guard lock(cache_mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    const std::vector<ProcessOutcome> outcomes =
        cfg_.mode == RunnerMode::Forkserver ? run_forkserver(source, tests) : run_spawn(source, tests);
    std::size_t passed = 0;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const auto& o = outcomes[i];
      if (!o.timed_out && o.exit_status == 0 &&
          normalize_output(o.stdout_text, cfg_.output_normalization) ==
              normalize_output(tests[i].expected_output, cfg_.output_normalization))
        ++passed;
    }
    const double frac = static_cast<double>(passed) / static_cast<double>(tests.size());
    if (cfg_.cache) {
      std::lock_guard lock(cache_mu_);
      if (cache_.size() > 100000) cache_.clear();
      cache_[key] = frac;
    }
    return frac;
  }

  // Raw per-test outcomes, bypassing the syntax gate and the cache.
  std::vector<ProcessOutcome> execute(std::string_view source, const std::vector<std::string>& inputs) {
    std::vector<TestCase> tests;
    for (const auto& i : inputs) tests.push_back({i, {}});
    return cfg_.mode == RunnerMode::Forkserver ? run_forkserver(source, tests) : run_spawn(source, tests);
  }

 private:
  const std::filesystem::path& workdir() {
    std::lock_guard lock(dir_mu_);
    if (workdir_.empty()) workdir_ = detail::make_temp_dir();
    return workdir_;
  }

  std::vector<ProcessOutcome> run_spawn(std::string_view source, const std::vector<TestCase>& tests) {
    const auto path = workdir() / ("prog-" + hex64(fnv1a(source)) + "-" +
                                   std::to_string(counter_.fetch_add(1)) + ".py");
    {
      std::ofstream f(path, std::ios::binary);
      f << source;
      if (!f) throw EnvironmentError("cannot write " + path.string());
    }
    const auto args = detail::split_command(cfg_.interpreter_command, path.string());
    std::vector<ProcessOutcome> out;
    try {
      for (const auto& t : tests) {
        slots_.acquire();
        try {
          auto child = detail::spawn_child(args, cfg_.memory_limit);
          out.push_back(detail::communicate(child, t.input, cfg_.per_test_timeout_ms, cfg_.output_cap));
        } catch (...) {
          slots_.release();
          throw;
        }
        slots_.release();
      }
    } catch (...) {
      std::filesystem::remove(path);
      throw;
    }
    std::filesystem::remove(path);
    return out;
  }

  void start_helper() {
    const auto path = workdir() / "forkserver.py";
    {
      std::ofstream f(path, std::ios::binary);
      f << detail::kForkserverHelper;
    }
    helper_ = detail::spawn_child(detail::split_command(cfg_.interpreter_command, path.string()), 0);
    reply_buf_.clear();
  }

  void stop_helper() {
    if (helper_.pid < 0) return;
    helper_.close_in();
    helper_.close_out();
    helper_.reap(true);
  }

  bool send_all(std::string_view s) {
    std::size_t off = 0;
    while (off < s.size()) {
      const ssize_t w = ::write(helper_.in_fd, s.data() + off, s.size() - off);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) return false;
      off += static_cast<std::size_t>(w);
    }
    return true;
  }

  bool read_line(std::string& line, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    char buf[65536];
    for (;;) {
      const auto nl = reply_buf_.find('\n');
      if (nl != std::string::npos) {
        line = reply_buf_.substr(0, nl);
        reply_buf_.erase(0, nl + 1);
        return true;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                            deadline - std::chrono::steady_clock::now())
                            .count();
      if (left <= 0) return false;
      pollfd p{helper_.out_fd, POLLIN, 0};
      const int pr = ::poll(&p, 1, static_cast<int>(left));
      if (pr < 0 && errno == EINTR) continue;
      if (pr <= 0) return false;
      const ssize_t r = ::read(helper_.out_fd, buf, sizeof buf);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) return false;
      reply_buf_.append(buf, static_cast<std::size_t>(r));
    }
  }

  std::vector<ProcessOutcome> run_forkserver(std::string_view source, const std::vector<TestCase>& tests) {
    nlohmann::json req;
    req["src"] = std::string(source);
    req["timeout"] = cfg_.per_test_timeout_ms / 1000.0;
    req["mem"] = cfg_.memory_limit;
    req["cap"] = cfg_.output_cap;
    req["batch"] = cfg_.batch;
    req["budget"] = cfg_.program_budget_ms / 1000.0;
    auto& inputs = req["inputs"] = nlohmann::json::array();
    for (const auto& t : tests) inputs.push_back(t.input);
    const std::string payload = req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    const int budget = 2 * static_cast<int>(tests.size()) * (cfg_.per_test_timeout_ms + 1000) + 10000;

    std::lock_guard lock(helper_mu_);
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (helper_.pid < 0) start_helper();
      std::string line;
      if (send_all(payload) && read_line(line, budget)) {
        const auto reply = nlohmann::json::parse(line);
        std::vector<ProcessOutcome> out;
        if (!reply.at("compiled").get<bool>()) {
          out.resize(tests.size());
          return out;
        }
        for (const auto& r : reply.at("results")) {
          ProcessOutcome o;
          o.exit_status = r.at("status").get<int>();
          o.timed_out = r.at("timeout").get<bool>();
          o.stdout_text = r.at("out").get<std::string>();
          out.push_back(std::move(o));
        }
        return out;
      }
      stop_helper();
    }
    throw EnvironmentError("forkserver helper is not responding (interpreter_command: " +
                           cfg_.interpreter_command + ")");
  }

  TestRunConfig cfg_;
  std::counting_semaphore<> slots_;
  std::mutex dir_mu_, cache_mu_, helper_mu_;
  std::filesystem::path workdir_;
  std::atomic<std::uint64_t> counter_{0};
  std::unordered_map<std::uint64_t, double> cache_;
  detail::Child helper_;
  std::string reply_buf_;
};

// Shared runners, one per distinct configuration.
inline TestRunner& shared_runner(const TestRunConfig& cfg) {
  static std::mutex mu;
  static std::map<std::uint64_t, std::unique_ptr<TestRunner>> runners;
  const std::uint64_t key = hash_combine(cfg.fingerprint(), static_cast<std::uint64_t>(cfg.mode));
  std::lock_guard lock(mu);
  auto& r = runners[key];
  if (!r) r = std::make_unique<TestRunner>(cfg);
  return *r;
}

inline double run_tests(std::string_view source, const std::vector<TestCase>& tests,
                        const TestRunConfig& cfg = {}) {
  return shared_runner(cfg).run(source, tests);
}

}  // namespace eqrl::metrics
