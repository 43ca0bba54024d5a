#pragma once

// Line protocol between a plant process and a policy process.
//
//   <KIND>,<step>,<agent>[,<payload>...]\n      KIND in {OBS, ACT, ERR, BYE}
//
// OBS carries the normalised observation (5 fields for agent 0, 6 for
// agent 1), ACT one action index, ERR one error code, BYE nothing. The
// client sends one frame and waits for exactly one reply.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coadapt/environment.hpp"
#include "coadapt/error.hpp"
#include "coadapt/harness.hpp"
#include "coadapt/mlp.hpp"

namespace coadapt {

struct ObsFrame {
  std::uint64_t step = 0;
  int agent = 0;
  std::vector<double> payload;
  friend bool operator==(const ObsFrame&, const ObsFrame&) = default;
};

struct ActFrame {
  std::uint64_t step = 0;
  int agent = 0;
  int action = 0;
  friend bool operator==(const ActFrame&, const ActFrame&) = default;
};

struct ErrFrame {
  std::uint64_t step = 0;
  int agent = 0;
  int code = 0;
  friend bool operator==(const ErrFrame&, const ErrFrame&) = default;
};

struct ByeFrame {
  std::uint64_t step = 0;
  int agent = 0;
  friend bool operator==(const ByeFrame&, const ByeFrame&) = default;
};

using Frame = std::variant<ObsFrame, ActFrame, ErrFrame, ByeFrame>;

enum class ProtocolCode : int {
  Malformed = 1,       // field count, number syntax, missing newline
  UnknownKind = 2,
  BadAgent = 3,
  UnexpectedKind = 4,  // a server only accepts OBS and BYE
  NoPolicy = 5,        // no checkpoint loaded for that agent
  Busy = 6,            // another connection is being served
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ProtocolCode code, const std::string& what, std::string_view line)
      : std::runtime_error(what + " in frame '" + printable(line) + "'"), code_(code), line_(line) {}
  ProtocolCode code() const { return code_; }
  const std::string& line() const { return line_; }

 private:
  static std::string printable(std::string_view line) {
    std::string s;
    for (char c : line) s += c == '\n' ? std::string("\\n") : std::string(1, c);
    return s;
  }
  ProtocolCode code_;
  std::string line_;
};

inline std::size_t obs_field_count(int agent) { return agent == 0 ? kHumanObsDim : kMachineObsDim; }
inline int action_count(int agent) {
  return static_cast<int>(agent == 0 ? kHumanActions : kMachineActions);
}

inline std::string encode_frame(const Frame& frame) {
  return std::visit(
      [](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        std::string s;
        if constexpr (std::is_same_v<T, ObsFrame>) s = "OBS";
        if constexpr (std::is_same_v<T, ActFrame>) s = "ACT";
        if constexpr (std::is_same_v<T, ErrFrame>) s = "ERR";
        if constexpr (std::is_same_v<T, ByeFrame>) s = "BYE";
        s += ',' + std::to_string(f.step) + ',' + std::to_string(f.agent);
        if constexpr (std::is_same_v<T, ObsFrame>) {
          require(f.payload.size() == obs_field_count(f.agent), "OBS payload size does not match the agent");
          for (double v : f.payload) {
            require_finite(v, "OBS payload");
            s += ',' + format_double(v);
          }
        }
        if constexpr (std::is_same_v<T, ActFrame>) s += ',' + std::to_string(f.action);
        if constexpr (std::is_same_v<T, ErrFrame>) s += ',' + std::to_string(f.code);
        s += '\n';
        return s;
      },
      frame);
}

namespace detail {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

inline Frame decode_frame(std::string_view line) {
  if (line.empty() || line.back() != '\n')
    throw ProtocolError(ProtocolCode::Malformed, "frame is not newline-terminated", line);
  std::string_view body = line.substr(0, line.size() - 1);
  std::vector<std::string_view> f;
  for (std::size_t start = 0;;) {
    const auto comma = body.find(',', start);
    f.push_back(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }

  const std::string_view kind = f[0];
  if (kind != "OBS" && kind != "ACT" && kind != "ERR" && kind != "BYE")
    throw ProtocolError(ProtocolCode::UnknownKind, "unknown frame kind", line);
  if (f.size() < 3) throw ProtocolError(ProtocolCode::Malformed, "wrong field count", line);

  std::uint64_t step = 0;
  int agent = 0;
  if (!detail::parse_int(f[1], step)) throw ProtocolError(ProtocolCode::Malformed, "bad step index", line);
  if (!detail::parse_int(f[2], agent)) throw ProtocolError(ProtocolCode::Malformed, "bad agent id", line);
  if (agent != 0 && agent != 1) throw ProtocolError(ProtocolCode::BadAgent, "agent id out of range", line);

  if (kind == "BYE") {
    if (f.size() != 3) throw ProtocolError(ProtocolCode::Malformed, "wrong field count", line);
    return ByeFrame{step, agent};
  }
  if (kind == "ACT" || kind == "ERR") {
    if (f.size() != 4) throw ProtocolError(ProtocolCode::Malformed, "wrong field count", line);
    int value = 0;
    if (!detail::parse_int(f[3], value)) throw ProtocolError(ProtocolCode::Malformed, "non-numeric payload", line);
    if (kind == "ERR") return ErrFrame{step, agent, value};
    if (value < 0 || value >= action_count(agent))
      throw ProtocolError(ProtocolCode::Malformed, "action index out of range", line);
    return ActFrame{step, agent, value};
  }
  if (f.size() != 3 + obs_field_count(agent)) throw ProtocolError(ProtocolCode::Malformed, "wrong field count", line);
  ObsFrame obs{step, agent, {}};
  for (std::size_t i = 3; i < f.size(); ++i) {
    double v = 0.0;
    const auto res = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
    if (f[i].empty() || res.ec != std::errc() || res.ptr != f[i].data() + f[i].size() || !std::isfinite(v))
      throw ProtocolError(ProtocolCode::Malformed, "non-numeric payload", line);
    obs.payload.push_back(v);
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Policy side

// Answers one line with one line. Greedy by default; Sample mode draws from
// a seeded stream.
class PolicyServer {
 public:
  PolicyServer(std::optional<MLPParams> human_actor, std::optional<MLPParams> machine_actor,
               ActionMode mode = ActionMode::Greedy, std::uint64_t seed = 0)
      : actors_{std::move(human_actor), std::move(machine_actor)}, mode_(mode), rng_(seed) {
    for (int a = 0; a < 2; ++a) {
      if (!actors_[a]) continue;
      require(actors_[a]->head == Head::Softmax, "serving needs softmax actor checkpoints");
      require(actors_[a]->input_dim() == obs_field_count(a) &&
                  actors_[a]->output_dim() == static_cast<std::size_t>(action_count(a)),
              "actor checkpoint shape does not match agent " + std::to_string(a));
    }
  }

  std::string handle_line(std::string_view line) {
    Frame frame;
    try {
      frame = decode_frame(line);
    } catch (const ProtocolError& e) {
      last_error_ = e.what();
      return encode_frame(ErrFrame{0, 0, static_cast<int>(e.code())});
    }
    if (const auto* bye = std::get_if<ByeFrame>(&frame)) {
      closed_ = true;
      return encode_frame(*bye);
    }
    const auto* obs = std::get_if<ObsFrame>(&frame);
    if (!obs) {
      const auto [step, agent] = std::visit([](const auto& f) { return std::pair{f.step, f.agent}; }, frame);
      last_error_ = "unexpected frame kind";
      return encode_frame(ErrFrame{step, agent, static_cast<int>(ProtocolCode::UnexpectedKind)});
    }
    const auto& actor = actors_[obs->agent];
    if (!actor) {
      last_error_ = "no policy loaded for agent " + std::to_string(obs->agent);
      return encode_frame(ErrFrame{obs->step, obs->agent, static_cast<int>(ProtocolCode::NoPolicy)});
    }
    const ActionDistribution d = actor_forward(*actor, obs->payload);
    const int action = mode_ == ActionMode::Greedy ? greedy_action(d).index : sample_action(d, rng_).index;
    return encode_frame(ActFrame{obs->step, obs->agent, action});
  }

  bool closed() const { return closed_; }
  void reopen() { closed_ = false; }
  const std::string& last_error() const { return last_error_; }

 private:
  std::optional<MLPParams> actors_[2];
  ActionMode mode_;
  std::mt19937_64 rng_;
  bool closed_ = false;
  std::string last_error_;
};

// ---------------------------------------------------------------------------
// Sockets

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  require(colon != std::string::npos && colon > 0, "endpoint must be HOST:PORT, got '" + text + "'");
  unsigned port = 0;
  const std::string p = text.substr(colon + 1);
  require(detail::parse_int(std::string_view(p), port) && port <= 65535, "bad port in endpoint '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), buffer_(std::move(o.buffer_)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
      buffer_ = std::move(o.buffer_);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void send_all(std::string_view data) const {
    while (!data.empty()) {
      const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw std::runtime_error(std::string("send failed: ") + std::strerror(errno));
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  // Next line including its '\n'; nullopt on orderly close. A trailing
  // partial line at close is returned as-is (and will fail decoding).
  std::optional<std::string> read_line(std::size_t max_len = 1 << 16) {
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl + 1);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (buffer_.size() > max_len) {
        std::string line = std::move(buffer_);
        buffer_.clear();
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw std::runtime_error(std::string("recv failed: ") + std::strerror(errno));
      if (n == 0) {
        if (buffer_.empty()) return std::nullopt;
        std::string line = std::move(buffer_);
        buffer_.clear();
        return line;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
  std::string buffer_;
};

inline sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  require(::getaddrinfo(host.c_str(), nullptr, &hints, &res) == 0 && res, "cannot resolve host '" + ep.host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

inline Socket listen_on(const Endpoint& ep, int backlog = 8) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw std::runtime_error(std::string("socket failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const sockaddr_in addr = resolve(ep);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw std::runtime_error("bind to " + ep.host + ":" + std::to_string(ep.port) + " failed: " + std::strerror(errno));
  if (::listen(s.fd(), backlog) != 0) throw std::runtime_error(std::string("listen failed: ") + std::strerror(errno));
  return s;
}

inline std::uint16_t bound_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

struct ServeOptions {
  int max_connections = 0;         // 0: serve forever
  bool refuse_concurrent = false;  // otherwise extra clients wait in the backlog
  std::function<void(std::uint16_t)> on_listening;
  std::function<void(const std::string&)> log;
};

// Serves one connection at a time until max_connections have closed.
// Protocol errors are answered with ERR and the connection continues.
inline void serve_policies(const Endpoint& ep, PolicyServer& server, const ServeOptions& opt = {}) {
  Socket listener = listen_on(ep);
  if (opt.on_listening) opt.on_listening(bound_port(listener));
  auto log = [&](const std::string& m) {
    if (opt.log) opt.log(m);
  };

  for (int served = 0; opt.max_connections == 0 || served < opt.max_connections; ++served) {
    Socket conn(::accept(listener.fd(), nullptr, nullptr));
    if (!conn.valid()) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("accept failed: ") + std::strerror(errno));
    }
    set_nodelay(conn.fd());
    server.reopen();
    log("connection opened");
    try {
      while (!server.closed()) {
        if (opt.refuse_concurrent) {
          pollfd fds[2] = {{conn.fd(), POLLIN, 0}, {listener.fd(), POLLIN, 0}};
          if (::poll(fds, 2, -1) < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error(std::string("poll failed: ") + std::strerror(errno));
          }
          if (fds[1].revents & POLLIN) {
            Socket extra(::accept(listener.fd(), nullptr, nullptr));
            if (extra.valid()) {
              extra.send_all(encode_frame(ErrFrame{0, 0, static_cast<int>(ProtocolCode::Busy)}));
              log("refused a concurrent connection");
            }
          }
          if (!(fds[0].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        }
        const auto line = conn.read_line();
        if (!line) break;
        const std::string reply = server.handle_line(*line);
        if (reply.rfind("ERR", 0) == 0) log(server.last_error());
        conn.send_all(reply);
      }
    } catch (const std::exception& e) {
      log(std::string("connection dropped: ") + e.what());
    }
    log("connection closed");
  }
}

// ---------------------------------------------------------------------------
// Plant side

class BridgeClient {
 public:
  explicit BridgeClient(const Endpoint& ep) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw std::runtime_error(std::string("socket failed: ") + std::strerror(errno));
    const sockaddr_in addr = resolve(ep);
    if (::connect(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
      throw std::runtime_error("connect to " + ep.host + ":" + std::to_string(ep.port) +
                               " failed: " + std::strerror(errno));
    set_nodelay(sock_.fd());
  }
  BridgeClient(BridgeClient&&) = default;
  BridgeClient& operator=(BridgeClient&&) = default;
  ~BridgeClient() {
    try {
      close();
    } catch (...) {
    }
  }

  Frame request(const Frame& frame) {
    sock_.send_all(encode_frame(frame));
    const auto line = sock_.read_line();
    if (!line) throw std::runtime_error("bridge peer closed the connection");
    return decode_frame(*line);
  }

  int act(std::uint64_t step, int agent, std::span<const double> obs) {
    const Frame reply = request(ObsFrame{step, agent, {obs.begin(), obs.end()}});
    if (const auto* err = std::get_if<ErrFrame>(&reply))
      throw std::runtime_error("bridge peer answered ERR code " + std::to_string(err->code) + " at step " +
                               std::to_string(step));
    const auto* act = std::get_if<ActFrame>(&reply);
    require(act != nullptr, "bridge peer answered with an unexpected frame kind");
    require(act->step == step && act->agent == agent, "ACT frame does not echo the OBS it answers");
    return act->action;
  }

  void close() {
    if (!sock_.valid()) return;
    sock_.send_all(encode_frame(ByeFrame{0, 0}));
    (void)sock_.read_line();
    sock_.close();
  }

 private:
  Socket sock_;
};

// Policy whose decisions come from the remote side.
inline PolicyFn remote_policy(BridgeClient& client, int agent) {
  return [&client, agent](int decision, std::span<const double> obs) {
    return client.act(static_cast<std::uint64_t>(decision), agent, obs);
  };
}

}  // namespace coadapt
