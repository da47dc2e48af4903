#pragma once

#include <cstdio>
#include <optional>
#include <string>

#include <sys/types.h>

namespace diffsens {

// Child process launched via /bin/sh -c with piped stdin and stdout. stderr
// is inherited.
class Subprocess {
 public:
  explicit Subprocess(const std::string& command);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  // Writes line plus '\n' and flushes. Returns false if the pipe is closed.
  bool write_line(const std::string& line);
  // Next line without its terminator, or nullopt at end of stream.
  std::optional<std::string> read_line();
  void close_stdin();
  // Blocks until exit; returns the exit status (128 + signal if killed).
  int wait();
  // SIGKILL and reap; returns the wait status.
  int kill();
  bool exited() const noexcept { return exited_; }

 private:
  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
  bool exited_ = false;
  int status_ = 0;
};

}  // namespace diffsens
