#include "latent_audit/framing.hpp"

#include <cstdio>

#include "latent_audit/dataset_io.hpp"
#include "latent_audit/error.hpp"
#include "latent_audit/numerics.hpp"
#include "latent_audit/rng.hpp"

namespace latent_audit::bridge {

std::string encode_frame(std::string_view body) {
  if (body.size() > kMaxFrameBytes) throw Error(ErrorCode::Transport, "frame body too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

std::string encode_message(const nlohmann::json& message) { return encode_frame(message.dump()); }

void FrameDecoder::feed(std::string_view bytes) {
  if (pos_ > 0 && pos_ == buffer_.size()) {
    buffer_.clear();
    pos_ = 0;
  }
  buffer_.append(bytes);
}

std::optional<std::string> FrameDecoder::next() {
  if (buffered() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + pos_);
  const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
  if (n > kMaxFrameBytes) throw Error(ErrorCode::Transport, "incoming frame of " + std::to_string(n) + " bytes exceeds limit");
  if (buffered() < 4 + std::size_t{n}) return std::nullopt;
  std::string body = buffer_.substr(pos_ + 4, n);
  pos_ += 4 + n;
  if (pos_ > 4096 && pos_ * 2 > buffer_.size()) {
    buffer_.erase(0, pos_);
    pos_ = 0;
  }
  return body;
}

nlohmann::json hello_request(std::int64_t id) { return {{"v", kProtocolVersion}, {"id", id}, {"op", "hello"}}; }

nlohmann::json generate_request(std::int64_t id, const std::string& space, const Eigen::VectorXd& z) {
  nlohmann::json zs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < z.size(); ++i) zs.push_back(format_real(z[i]));
  return {{"v", kProtocolVersion}, {"id", id}, {"op", "generate"}, {"space", space}, {"z", std::move(zs)}};
}

nlohmann::json classify_request(std::int64_t id, const std::string& image_id, const std::string& classifier) {
  return {{"v", kProtocolVersion}, {"id", id}, {"op", "classify"}, {"image_id", image_id}, {"classifier", classifier}};
}

nlohmann::json ok_response(std::int64_t id) { return {{"id", id}, {"ok", true}}; }

nlohmann::json error_response(std::int64_t id, const std::string& code, const std::string& message) {
  return {{"id", id}, {"ok", false}, {"code", code}, {"msg", message}};
}

std::string echo_image_id(const Eigen::VectorXd& z) {
  std::string text;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i) text += ',';
    text += format_real(z[i]);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return std::string("echo-") + buf;
}

double echo_score(const Eigen::VectorXd& z) { return z.size() ? numerics::sigmoid(z[0]) : 0.5; }

}  // namespace latent_audit::bridge
