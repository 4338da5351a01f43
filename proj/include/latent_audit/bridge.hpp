#pragma once

#include <chrono>
#include <functional>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latent_audit/framing.hpp"
#include "latent_audit/transect.hpp"

namespace latent_audit::bridge {

struct Endpoint {
  enum class Kind { tcp, stdio };
  Kind kind = Kind::tcp;
  std::string host = "127.0.0.1";
  int port = 0;
  std::vector<std::string> command;  ///< argv for stdio
  int timeout_ms = 5000;
  int max_retries = 2;
};

/// "tcp://HOST:PORT", "HOST:PORT", or "stdio:PROGRAM ARG...".
Endpoint parse_endpoint(const std::string& text);

struct Capabilities {
  int version = 0;
  int dim = 0;
  std::string space;
  std::vector<std::string> classifiers;
};

using Clock = std::chrono::steady_clock;

/// Byte pipe to one server. Implementations throw Timeout past the deadline
/// and Transport on a broken connection.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual void send(std::string_view bytes, Clock::time_point deadline) = 0;
  virtual std::string receive_frame(Clock::time_point deadline) = 0;
};

/// Connection attempts are repeated until the deadline (a refused port is
/// reported as Timeout once time runs out).
std::unique_ptr<Connection> connect_tcp(const std::string& host, int port, Clock::time_point deadline);
std::unique_ptr<Connection> spawn_stdio(const std::vector<std::string>& command);

/// Generator and classifier backed by a protocol-v1 server. Requests on one
/// client are serialized; use one client per worker for parallelism.
class BridgeClient final : public transect::Generator, public transect::Classifier {
 public:
  explicit BridgeClient(Endpoint endpoint);
  ~BridgeClient() override;

  /// Exchanges versions and caches capabilities. Throws VersionMismatch.
  const Capabilities& hello();
  const std::optional<Capabilities>& capabilities() const { return caps_; }

  transect::GeneratorInfo info() const override;
  /// Throws DimensionMismatch before sending when z has the wrong length.
  transect::GeneratedImage generate(const LatentPoint& z) override;
  std::vector<std::string> classifier_names() const override;
  /// Score clamped to [0, 1].
  double classify(const std::string& image_id, const std::string& classifier) override;

  std::size_t retries_used() const { return retries_used_; }
  std::int64_t last_request_id() const { return next_id_ - 1; }

 private:
  nlohmann::json call(const std::function<nlohmann::json(std::int64_t)>& make_request);
  nlohmann::json attempt(const nlohmann::json& request, std::int64_t id);
  void reconnect(Clock::time_point deadline);

  Endpoint endpoint_;
  std::unique_ptr<Connection> conn_;
  std::optional<Capabilities> caps_;
  std::int64_t next_id_ = 1;
  std::size_t retries_used_ = 0;
};

}  // namespace latent_audit::bridge
