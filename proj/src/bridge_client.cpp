#include "latent_audit/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace latent_audit::bridge {

Endpoint parse_endpoint(const std::string& text) {
  Endpoint ep;
  if (text.rfind("stdio:", 0) == 0) {
    ep.kind = Endpoint::Kind::stdio;
    std::istringstream in(text.substr(6));
    for (std::string arg; in >> arg;) ep.command.push_back(arg);
    if (ep.command.empty()) throw Error(ErrorCode::Parse, "stdio endpoint needs a command");
    return ep;
  }
  std::string rest = text.rfind("tcp://", 0) == 0 ? text.substr(6) : text;
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon + 1 == rest.size()) {
    throw Error(ErrorCode::Parse, "endpoint '" + text + "' is not HOST:PORT");
  }
  ep.host = colon == 0 ? "127.0.0.1" : rest.substr(0, colon);
  try {
    std::size_t used = 0;
    ep.port = std::stoi(rest.substr(colon + 1), &used);
    if (used != rest.size() - colon - 1) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw Error(ErrorCode::Parse, "endpoint '" + text + "' has a bad port");
  }
  if (ep.port <= 0 || ep.port > 65535) throw Error(ErrorCode::Parse, "endpoint port out of range");
  return ep;
}

namespace {

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

void wait_fd(int fd, short events, Clock::time_point deadline, const char* what) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int ms = remaining_ms(deadline);
    if (ms == 0) throw Error(ErrorCode::Timeout, std::string("timed out while ") + what);
    const int rc = ::poll(&p, 1, ms);
    if (rc > 0) return;
    if (rc == 0) throw Error(ErrorCode::Timeout, std::string("timed out while ") + what);
    if (errno != EINTR) throw Error(ErrorCode::Transport, std::string("poll failed: ") + std::strerror(errno));
  }
}

// Reads and writes on a pair of non-blocking descriptors.
class FdConnection : public Connection {
 public:
  FdConnection(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

  void send(std::string_view bytes, Clock::time_point deadline) override {
    std::size_t off = 0;
    while (off < bytes.size()) {
      wait_fd(write_fd_, POLLOUT, deadline, "sending");
      const ssize_t n = send_or_write(write_fd_, bytes.data() + off, bytes.size() - off);
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        throw Error(ErrorCode::Transport, std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string receive_frame(Clock::time_point deadline) override {
    for (;;) {
      if (auto body = decoder_.next()) return *body;
      wait_fd(read_fd_, POLLIN, deadline, "waiting for a response");
      char buf[65536];
      const ssize_t n = ::read(read_fd_, buf, sizeof buf);
      if (n == 0) throw Error(ErrorCode::Transport, "server closed the connection");
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        throw Error(ErrorCode::Transport, std::string("read failed: ") + std::strerror(errno));
      }
      decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
  }

 protected:
  static ssize_t send_or_write(int fd, const char* data, std::size_t len) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) return ::write(fd, data, len);
    return n;
  }

  int read_fd_;
  int write_fd_;
  FrameDecoder decoder_;
};

class TcpConnection final : public FdConnection {
 public:
  explicit TcpConnection(int fd) : FdConnection(fd, fd) {}
  ~TcpConnection() override { ::close(read_fd_); }
};

class StdioConnection final : public FdConnection {
 public:
  StdioConnection(pid_t pid, int read_fd, int write_fd) : FdConnection(read_fd, write_fd), pid_(pid) {}
  ~StdioConnection() override {
    ::close(write_fd_);
    ::close(read_fd_);
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }

 private:
  pid_t pid_;
};

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

// One non-blocking connect attempt; returns the socket or -1 on refusal.
int try_connect(const addrinfo* ai, Clock::time_point deadline) {
  const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
  if (fd < 0) throw Error(ErrorCode::Transport, std::string("socket failed: ") + std::strerror(errno));
  set_nonblocking(fd);
  int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
  if (rc != 0 && errno == EINPROGRESS) {
    try {
      wait_fd(fd, POLLOUT, deadline, "connecting");
    } catch (...) {
      ::close(fd);
      throw;
    }
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    rc = err == 0 ? 0 : -1;
  }
  if (rc != 0) {
    ::close(fd);
    return -1;
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

}  // namespace

std::unique_ptr<Connection> connect_tcp(const std::string& host, int port, Clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::Transport, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
  for (;;) {
    for (const addrinfo* ai = res; ai; ai = ai->ai_next) {
      const int fd = try_connect(ai, deadline);
      if (fd >= 0) return std::make_unique<TcpConnection>(fd);
    }
    if (remaining_ms(deadline) == 0) {
      throw Error(ErrorCode::Timeout, "could not connect to " + host + ":" + service + " before the deadline");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(std::min(20, remaining_ms(deadline))));
  }
}

std::unique_ptr<Connection> spawn_stdio(const std::vector<std::string>& command) {
  if (command.empty()) throw Error(ErrorCode::Transport, "empty stdio command");
  // A dead child must surface as a write error, not kill the process.
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw Error(ErrorCode::Transport, "pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorCode::Transport, "pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::Transport, "fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> argv;
    for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  set_nonblocking(to_child[1]);
  set_nonblocking(from_child[0]);
  return std::make_unique<StdioConnection>(pid, from_child[0], to_child[1]);
}

BridgeClient::BridgeClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.timeout_ms <= 0) throw Error(ErrorCode::Validation, "timeout_ms must be positive");
  if (endpoint_.max_retries < 0) throw Error(ErrorCode::Validation, "max_retries must be >= 0");
}

BridgeClient::~BridgeClient() = default;

void BridgeClient::reconnect(Clock::time_point deadline) {
  conn_.reset();
  if (endpoint_.kind == Endpoint::Kind::tcp) {
    conn_ = connect_tcp(endpoint_.host, endpoint_.port, deadline);
  } else {
    conn_ = spawn_stdio(endpoint_.command);
  }
}

nlohmann::json BridgeClient::attempt(const nlohmann::json& request, std::int64_t id) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(endpoint_.timeout_ms);
  if (!conn_) reconnect(deadline);
  conn_->send(encode_message(request), deadline);
  for (;;) {
    const std::string body = conn_->receive_frame(deadline);
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Transport, std::string("malformed response: ") + e.what());
    }
    // Late answers to abandoned requests are skipped.
    if (response.is_object() && response.value("id", std::int64_t{-1}) == id) return response;
  }
}

nlohmann::json BridgeClient::call(const std::function<nlohmann::json(std::int64_t)>& make_request) {
  for (int tries = 0;; ++tries) {
    const std::int64_t id = next_id_++;
    try {
      nlohmann::json response = attempt(make_request(id), id);
      if (!response.value("ok", false)) {
        const std::string code = response.value("code", std::string("INTERNAL"));
        const std::string msg = response.value("msg", std::string());
        if (code == "UNKNOWN_IMAGE") throw Error(ErrorCode::UnknownImage, msg);
        if (code == "UNKNOWN_CLASSIFIER") throw Error(ErrorCode::UnknownClassifier, msg);
        throw Error(ErrorCode::ServerError, code + ": " + msg);
      }
      return response;
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::Timeout || e.code() == ErrorCode::Transport;
      if (!retryable) throw;
      conn_.reset();
      if (tries >= endpoint_.max_retries) throw;
      ++retries_used_;
    }
  }
}

const Capabilities& BridgeClient::hello() {
  const auto r = call([](std::int64_t id) { return hello_request(id); });
  Capabilities c;
  try {
    c.version = r.at("v").get<int>();
    if (c.version != kProtocolVersion) {
      throw Error(ErrorCode::VersionMismatch, "server speaks protocol v" + std::to_string(c.version) + ", client v" +
                                                  std::to_string(kProtocolVersion));
    }
    c.dim = r.at("dim").get<int>();
    c.space = r.at("space").get<std::string>();
    c.classifiers = r.value("classifiers", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Transport, std::string("malformed hello response: ") + e.what());
  }
  caps_ = std::move(c);
  return *caps_;
}

transect::GeneratorInfo BridgeClient::info() const {
  if (!caps_) throw Error(ErrorCode::Validation, "bridge client used before hello");
  return {caps_->space, caps_->dim, false};
}

transect::GeneratedImage BridgeClient::generate(const LatentPoint& z) {
  if (!caps_) hello();
  if (z.dim() != caps_->dim) {
    throw Error(ErrorCode::DimensionMismatch, "latent has dimension " + std::to_string(z.dim()) + ", server expects " +
                                                  std::to_string(caps_->dim));
  }
  const std::string space = z.space.empty() ? caps_->space : z.space;
  const auto r = call([&](std::int64_t id) { return generate_request(id, space, z.values); });
  try {
    return {r.at("image_id").get<std::string>(), r.value("path", std::string())};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Transport, std::string("malformed generate response: ") + e.what());
  }
}

std::vector<std::string> BridgeClient::classifier_names() const {
  return caps_ ? caps_->classifiers : std::vector<std::string>{};
}

double BridgeClient::classify(const std::string& image_id, const std::string& classifier) {
  if (!caps_) hello();
  if (std::find(caps_->classifiers.begin(), caps_->classifiers.end(), classifier) == caps_->classifiers.end()) {
    throw Error(ErrorCode::UnknownClassifier, "server does not offer classifier '" + classifier + "'");
  }
  const auto r = call([&](std::int64_t id) { return classify_request(id, image_id, classifier); });
  double score = 0.0;
  try {
    score = r.at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Transport, std::string("malformed classify response: ") + e.what());
  }
  if (!std::isfinite(score)) throw Error(ErrorCode::ServerError, "INTERNAL: non-finite score");
  return std::clamp(score, 0.0, 1.0);
}

}  // namespace latent_audit::bridge
