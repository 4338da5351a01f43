#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

namespace latent_audit::bridge {

inline constexpr int kProtocolVersion = 1;
/// Frames larger than this are rejected as a transport error.
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

/// 4-byte big-endian length followed by the body.
std::string encode_frame(std::string_view body);
/// Compact JSON with sorted keys, then framed.
std::string encode_message(const nlohmann::json& message);

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete body, if any. Throws Transport on an oversized length.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size() - pos_; }

 private:
  std::string buffer_;
  std::size_t pos_ = 0;
};

nlohmann::json hello_request(std::int64_t id);
/// Latent coordinates travel as 17-significant-digit decimal strings.
nlohmann::json generate_request(std::int64_t id, const std::string& space, const Eigen::VectorXd& z);
nlohmann::json classify_request(std::int64_t id, const std::string& image_id, const std::string& classifier);

nlohmann::json ok_response(std::int64_t id);
nlohmann::json error_response(std::int64_t id, const std::string& code, const std::string& message);

/// Reference echo semantics shared by the test server and the fixtures.
std::string echo_image_id(const Eigen::VectorXd& z);
double echo_score(const Eigen::VectorXd& z);

}  // namespace latent_audit::bridge
