#include "svasr/dispatch.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "svasr/util.hpp"

namespace svasr {

const char* to_string(SwitchState s) { return s == SwitchState::on ? "ON" : "OFF"; }

std::map<std::string, int> SwitchBank::default_names() {
  return {{"BATHROOM", 1}, {"GARDEN", 2}, {"AIR_COND", 3}};
}

SwitchBank::SwitchBank(int size, std::map<std::string, int> names)
    : states_(static_cast<std::size_t>(std::max(size, 0)), SwitchState::off), names_(std::move(names)) {
  if (size <= 0) throw DomainError("switch bank needs at least one switch");
  for (const auto& [name, id] : names_)
    if (!valid(id)) throw DomainError("switch name " + name + " maps to invalid id " + std::to_string(id));
}

SwitchState SwitchBank::state(int id) const {
  if (!valid(id)) throw DomainError("invalid switch id " + std::to_string(id));
  return states_[std::size_t(id - 1)];
}

void SwitchBank::set(int id, SwitchState s) {
  if (!valid(id)) throw DomainError("invalid switch id " + std::to_string(id));
  states_[std::size_t(id - 1)] = s;
}

SwitchState SwitchBank::toggle(int id) {
  set(id, state(id) == SwitchState::on ? SwitchState::off : SwitchState::on);
  return state(id);
}

std::string format_command(const Command& c) {
  switch (c.action) {
    case Command::Action::on: return "SET " + std::to_string(c.target) + " ON";
    case Command::Action::off: return "SET " + std::to_string(c.target) + " OFF";
    case Command::Action::toggle: return "TOGGLE " + std::to_string(c.target);
  }
  return {};
}

// ---------------------------------------------------------------------------

namespace {

std::optional<int> parse_int(std::string_view s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s[0] == '-' || s[0] == '+') return std::nullopt;
  return v;
}

std::optional<int> digit_word(const std::string& w) {
  if (w.rfind("NUM_", 0) != 0) return std::nullopt;
  return parse_int(std::string_view(w).substr(4));
}

}  // namespace

Interpretation interpret(const WordSequence& words, const SwitchBank& bank) {
  Interpretation out;
  int selected = 0;
  std::ptrdiff_t pending_toggle = -1;
  for (const auto& w : words) {
    if (w == "SIL" || w == "NOISE") continue;
    std::ptrdiff_t toggle_here = -1;
    if (auto k = digit_word(w)) {
      if (*k == 0) {
        selected = 0;
      } else if (bank.valid(*k)) {
        selected = *k;
        out.commands.push_back({*k, Command::Action::toggle});
        toggle_here = std::ptrdiff_t(out.commands.size()) - 1;
      } else {
        out.warnings.push_back(w + ": no such switch");
      }
    } else if (auto it = bank.names().find(w); it != bank.names().end()) {
      selected = it->second;
    } else if (w == "ON" || w == "HIDUP" || w == "OFF" || w == "MATI") {
      const auto action = (w == "ON" || w == "HIDUP") ? Command::Action::on : Command::Action::off;
      if (selected == 0) {
        out.warnings.push_back(w + " with no switch selected, ignored");
      } else if (pending_toggle >= 0 && out.commands[std::size_t(pending_toggle)].target == selected) {
        out.commands[std::size_t(pending_toggle)].action = action;
      } else {
        out.commands.push_back({selected, action});
      }
    } else {
      throw DomainError("word '" + w + "' has no command meaning");
    }
    pending_toggle = toggle_here;
  }
  return out;
}

std::string handle_request(SwitchBank& bank, std::string_view line) {
  std::vector<std::string_view> tok;
  std::size_t start = 0;
  for (;;) {
    auto sp = line.find(' ', start);
    tok.push_back(line.substr(start, sp - start));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  for (auto t : tok)
    if (t.empty()) return "ERR syntax";

  const std::string_view verb = tok[0];
  if (verb == "GETALL") {
    if (tok.size() != 1) return "ERR syntax";
    std::string reply = "STATE";
    for (int id = 1; id <= bank.size(); ++id)
      reply += " " + std::to_string(id) + " " + to_string(bank.state(id));
    return reply;
  }
  const bool is_set = verb == "SET";
  if (!(is_set || verb == "TOGGLE" || verb == "GET")) return "ERR syntax";
  if (tok.size() != (is_set ? 3u : 2u)) return "ERR syntax";
  const auto id = parse_int(tok[1]);
  if (!id) return "ERR syntax";
  std::optional<SwitchState> target;
  if (is_set) {
    if (tok[2] == "ON") target = SwitchState::on;
    else if (tok[2] == "OFF") target = SwitchState::off;
    else return "ERR syntax";
  }
  if (!bank.valid(*id)) return "ERR id";
  const std::string id_text = std::to_string(*id);
  if (verb == "GET") return "STATE " + id_text + " " + to_string(bank.state(*id));
  if (is_set) bank.set(*id, *target);
  else bank.toggle(*id);
  return "ACK " + id_text + " " + to_string(bank.state(*id));
}

// ---------------------------------------------------------------------------
// Transport

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) throw DomainError("endpoint must be host:port, got '" + endpoint + "'");
  const auto port = parse_int(std::string_view(endpoint).substr(colon + 1));
  if (!port || *port > 65535) throw DomainError("bad port in endpoint '" + endpoint + "'");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(*port)};
}

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
      throw TransportError("cannot resolve host " + host);
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return addr;
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += std::size_t(n);
  }
  return true;
}

/// Reads up to and excluding the next newline; false on EOF or error.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    if (auto nl = buffer.find('\n'); nl != std::string::npos) {
      line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      return true;
    }
    char chunk[512];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, std::size_t(n));
  }
}

}  // namespace

SwitchBankServer::SwitchBankServer(const std::string& host, std::uint16_t port, SwitchBank bank)
    : bank_(std::move(bank)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket: " + std::string(std::strerror(errno)));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

SwitchBankServer::~SwitchBankServer() { stop(); }

SwitchBank SwitchBankServer::snapshot() const {
  std::lock_guard lock(bank_mutex_);
  return bank_;
}

void SwitchBankServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
}

void SwitchBankServer::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    std::lock_guard lock(conn_mutex_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    connections_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void SwitchBankServer::serve_connection(int fd) {
  std::string buffer, line;
  while (read_line(fd, buffer, line)) {
    ++requests_;
    std::string reply;
    {
      std::lock_guard lock(bank_mutex_);
      reply = handle_request(bank_, line);
    }
    if (!send_all(fd, reply + "\n")) break;
  }
  std::lock_guard lock(conn_mutex_);
  std::erase(connections_, fd);
  ::close(fd);
}

std::unique_ptr<SwitchBankServer> serve_switch_bank(const std::string& endpoint, SwitchBank bank) {
  auto [host, port] = parse_endpoint(endpoint);
  return std::make_unique<SwitchBankServer>(host, port, std::move(bank));
}

SwitchBankClient::SwitchBankClient(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}

SwitchBankClient::SwitchBankClient(const std::string& endpoint)
    : SwitchBankClient(parse_endpoint(endpoint).first, parse_endpoint(endpoint).second) {}

SwitchBankClient::~SwitchBankClient() { disconnect(); }

void SwitchBankClient::connect() {
  if (fd_ >= 0) return;
  sockaddr_in addr = resolve(host_, port_);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket: " + std::string(std::strerror(errno)));
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = std::strerror(errno);
    disconnect();
    throw TransportError("cannot connect to " + host_ + ":" + std::to_string(port_) + ": " + why);
  }
}

void SwitchBankClient::disconnect() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  buffer_.clear();
}

std::string SwitchBankClient::request(const std::string& line) {
  connect();
  std::string reply;
  if (!send_all(fd_, line + "\n") || !read_line(fd_, buffer_, reply)) {
    disconnect();
    throw TransportError("connection to switch bank lost");
  }
  return reply;
}

// ---------------------------------------------------------------------------

std::vector<std::string> DispatchOutcome::acknowledgements() const {
  std::vector<std::string> out;
  for (const auto& s : sent)
    if (s.applied) out.push_back(s.reply);
  return out;
}

DispatchOutcome dispatch(const Hypothesis& hyp, const SwitchBank& layout, CommandChannel& channel) {
  DispatchOutcome out;
  if (!hyp.accepted) {
    out.log.push_back("discarded: frame probability " + std::to_string(hyp.frame_probability) +
                      " below threshold");
    return out;
  }
  auto interp = interpret(hyp.words, layout);
  out.log = std::move(interp.warnings);
  for (const auto& c : interp.commands) {
    DispatchOutcome::Sent s{c, {}, false};
    const std::string line = format_command(c);
    const int attempts = c.action == Command::Action::toggle ? 1 : 2;
    for (int a = 0; a < attempts && !s.applied; ++a) {
      try {
        s.reply = channel.request(line);
        s.applied = s.reply.rfind("ACK ", 0) == 0;
        if (!s.applied) out.log.push_back(line + ": " + s.reply);
        break;
      } catch (const TransportError& e) {
        out.log.push_back(line + ": " + e.what());
      }
    }
    out.sent.push_back(std::move(s));
  }
  return out;
}

}  // namespace svasr
