#include "ldwm/envs/external.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace ldwm {

namespace {

std::string frame_line(const Image& img) { return "frame " + base64_encode(encode_png(img)); }

}  // namespace

ExternalEnv::ExternalEnv(const std::vector<std::string>& argv) {
  if (argv.empty()) throw std::invalid_argument("external env: empty command");
  int down[2], up[2];
  if (pipe(down) != 0) throw std::runtime_error("external env: pipe failed");
  if (pipe(up) != 0) {
    close(down[0]);
    close(down[1]);
    throw std::runtime_error("external env: pipe failed");
  }
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_ = fork();
  if (pid_ < 0) throw std::runtime_error("external env: fork failed");
  if (pid_ == 0) {
    dup2(down[0], STDIN_FILENO);
    dup2(up[1], STDOUT_FILENO);
    close(down[0]);
    close(down[1]);
    close(up[0]);
    close(up[1]);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(down[0]);
  close(up[1]);
  to_child_ = down[1];
  from_child_ = up[0];
  signal(SIGPIPE, SIG_IGN);

  std::istringstream is(request("spec"));
  std::string tag;
  is >> tag >> spec_.name >> spec_.actions >> spec_.max_steps;
  if (!is || tag != "spec" || spec_.actions < 2) throw std::runtime_error("external env: bad spec reply");
}

ExternalEnv::~ExternalEnv() {
  if (to_child_ >= 0) {
    const char quit[] = "quit\n";
    [[maybe_unused]] auto n = write(to_child_, quit, sizeof quit - 1);
    close(to_child_);
  }
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

std::string ExternalEnv::request(const std::string& line) {
  const std::string msg = line + "\n";
  std::size_t off = 0;
  while (off < msg.size()) {
    const ssize_t n = write(to_child_, msg.data() + off, msg.size() - off);
    if (n <= 0) throw std::runtime_error("external env: write failed");
    off += static_cast<std::size_t>(n);
  }
  for (;;) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      if (reply.rfind("error", 0) == 0) throw std::runtime_error("external env: " + reply);
      return reply;
    }
    char buf[65536];
    const ssize_t n = read(from_child_, buf, sizeof buf);
    if (n <= 0) throw std::runtime_error("external env: process closed its output");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

Image ExternalEnv::reset() {
  std::istringstream is(request("reset"));
  std::string tag, b64;
  is >> tag >> b64;
  if (tag != "frame") throw std::runtime_error("external env: bad reset reply");
  Image img = decode_png(base64_decode(b64));
  spec_.frame_width = img.width;
  spec_.frame_height = img.height;
  return img;
}

StepResult ExternalEnv::step(int action) {
  if (action < 0 || static_cast<std::size_t>(action) >= spec_.actions) {
    throw std::out_of_range("external env: action out of range");
  }
  std::istringstream is(request("step " + std::to_string(action)));
  std::string tag, b64;
  int done = 0;
  StepResult r;
  is >> tag >> b64 >> r.reward >> done;
  if (!is || tag != "frame") throw std::runtime_error("external env: bad step reply");
  r.frame = decode_png(base64_decode(b64));
  r.done = done != 0;
  return r;
}

std::string ExternalEnv::save_state() const { throw std::logic_error("external env: state is not observable"); }
void ExternalEnv::load_state(const std::string&) { throw std::logic_error("external env: state is not restorable"); }

void serve_env(Environment& env, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string cmd;
    is >> cmd;
    try {
      if (cmd == "quit") return;
      if (cmd == "spec") {
        out << "spec " << env.spec().name << ' ' << env.spec().actions << ' ' << env.spec().max_steps << '\n';
      } else if (cmd == "reset") {
        out << frame_line(env.reset()) << '\n';
      } else if (cmd == "step") {
        int a = -1;
        is >> a;
        if (!is) throw std::invalid_argument("step needs an action");
        StepResult r = env.step(a);
        std::ostringstream rs;
        rs.precision(17);
        rs << r.reward;
        out << frame_line(r.frame) << ' ' << rs.str() << ' ' << (r.done ? 1 : 0) << '\n';
      } else {
        out << "error unknown command '" << cmd << "'\n";
      }
    } catch (const std::exception& e) {
      out << "error " << e.what() << '\n';
    }
    out.flush();
  }
}

}  // namespace ldwm
