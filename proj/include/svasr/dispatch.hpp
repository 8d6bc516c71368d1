#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "svasr/decoder.hpp"
#include "svasr/error.hpp"
#include "svasr/lingua.hpp"

namespace svasr {

enum class SwitchState { off, on };

const char* to_string(SwitchState s);

/// Switches numbered 1..size(), plus spoken names mapped to switch ids.
class SwitchBank {
 public:
  static std::map<std::string, int> default_names();

  explicit SwitchBank(int size = 4, std::map<std::string, int> names = default_names());

  int size() const { return static_cast<int>(states_.size()); }
  bool valid(int id) const { return id >= 1 && id <= size(); }
  SwitchState state(int id) const;
  void set(int id, SwitchState s);
  SwitchState toggle(int id);
  const std::map<std::string, int>& names() const { return names_; }

 private:
  std::vector<SwitchState> states_;
  std::map<std::string, int> names_;
};

struct Command {
  enum class Action { on, off, toggle };
  int target = 0;
  Action action = Action::toggle;

  bool operator==(const Command&) const = default;
};

/// Wire form: "SET <id> ON", "SET <id> OFF" or "TOGGLE <id>".
std::string format_command(const Command& c);

struct Interpretation {
  std::vector<Command> commands;
  std::vector<std::string> warnings;
};

/// Reads words left to right with a selected-switch register. NUM_k selects
/// switch k and toggles it, NUM_0 clears the selection, a switch name selects
/// its switch, and ON/HIDUP or OFF/MATI set the selected switch, replacing
/// the toggle emitted by the directly preceding word. SIL and NOISE are skipped.
Interpretation interpret(const WordSequence& words, const SwitchBank& bank);

/// Applies one protocol request line (without its newline) and returns the reply.
std::string handle_request(SwitchBank& bank, std::string_view line);

class TransportError : public Error {
 public:
  using Error::Error;
};

/// Sends one request line and returns the reply line.
class CommandChannel {
 public:
  virtual ~CommandChannel() = default;
  virtual std::string request(const std::string& line) = 0;
};

/// TCP server for the line protocol. All requests go through one mutex-guarded bank.
class SwitchBankServer {
 public:
  /// Binds host:port (port 0 picks a free one) and starts serving.
  SwitchBankServer(const std::string& host, std::uint16_t port, SwitchBank bank);
  ~SwitchBankServer();
  SwitchBankServer(const SwitchBankServer&) = delete;
  SwitchBankServer& operator=(const SwitchBankServer&) = delete;

  std::uint16_t port() const { return port_; }
  /// Number of request lines received so far.
  std::size_t request_count() const { return requests_.load(); }
  SwitchBank snapshot() const;
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  SwitchBank bank_;
  mutable std::mutex bank_mutex_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mutex_;
  std::vector<int> connections_;
  std::vector<std::thread> workers_;
};

/// "host:port" endpoint.
std::unique_ptr<SwitchBankServer> serve_switch_bank(const std::string& endpoint, SwitchBank bank);

/// Line-protocol client; reconnects lazily after a transport failure.
class SwitchBankClient : public CommandChannel {
 public:
  SwitchBankClient(std::string host, std::uint16_t port);
  explicit SwitchBankClient(const std::string& endpoint);
  ~SwitchBankClient() override;
  SwitchBankClient(const SwitchBankClient&) = delete;
  SwitchBankClient& operator=(const SwitchBankClient&) = delete;

  std::string request(const std::string& line) override;

 private:
  void connect();
  void disconnect();

  std::string host_;
  std::uint16_t port_;
  int fd_ = -1;
  std::string buffer_;
};

struct DispatchOutcome {
  struct Sent {
    Command command;
    std::string reply;
    bool applied = false;
  };
  std::vector<Sent> sent;
  std::vector<std::string> log;

  std::vector<std::string> acknowledgements() const;
};

/// Executes an accepted hypothesis on the bank. Rejected hypotheses send
/// nothing. SET is retried once after a transport failure; TOGGLE is not.
DispatchOutcome dispatch(const Hypothesis& hyp, const SwitchBank& layout, CommandChannel& channel);

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace svasr
