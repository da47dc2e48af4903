#include "diffsens/subprocess.hpp"

#include <csignal>
#include <cstring>
#include <cerrno>
#include <cstdlib>

#include <sys/wait.h>
#include <unistd.h>

#include "diffsens/errors.hpp"

namespace diffsens {

Subprocess::Subprocess(const std::string& command) {
  // A dead child must surface as a write failure, not kill the parent.
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw TransportError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw TransportError(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw TransportError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = fdopen(in_pipe[1], "w");
  from_child_ = fdopen(out_pipe[0], "r");
}

Subprocess::~Subprocess() {
  close_stdin();
  if (!exited_ && pid_ > 0) wait();
  if (from_child_) std::fclose(from_child_);
}

bool Subprocess::write_line(const std::string& line) {
  if (!to_child_) return false;
  if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size()) return false;
  if (std::fputc('\n', to_child_) == EOF) return false;
  return std::fflush(to_child_) == 0;
}

std::optional<std::string> Subprocess::read_line() {
  if (!from_child_) return std::nullopt;
  char* buf = nullptr;
  std::size_t cap = 0;
  const ssize_t n = ::getline(&buf, &cap, from_child_);
  if (n < 0) {
    std::free(buf);
    return std::nullopt;
  }
  std::string line(buf, static_cast<std::size_t>(n));
  std::free(buf);
  if (!line.empty() && line.back() == '\n') line.pop_back();
  return line;
}

void Subprocess::close_stdin() {
  if (to_child_) {
    std::fclose(to_child_);
    to_child_ = nullptr;
  }
}

int Subprocess::wait() {
  if (exited_) return status_;
  int raw = 0;
  while (waitpid(pid_, &raw, 0) < 0) {
    if (errno != EINTR) {
      exited_ = true;
      status_ = -1;
      return status_;
    }
  }
  exited_ = true;
  if (WIFEXITED(raw)) {
    status_ = WEXITSTATUS(raw);
  } else if (WIFSIGNALED(raw)) {
    status_ = 128 + WTERMSIG(raw);
  }
  return status_;
}

int Subprocess::kill() {
  if (exited_) return status_;
  close_stdin();
  ::kill(pid_, SIGKILL);
  return wait();
}

}  // namespace diffsens
