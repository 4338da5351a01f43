#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "echo_server.hpp"
#include "latent_audit/bridge.hpp"
#include "latent_audit/error.hpp"
#include "latent_audit/framing.hpp"
#include "latent_audit/rng.hpp"

using namespace latent_audit;
using namespace latent_audit::bridge;
using latent_audit::testing::EchoBackend;
using latent_audit::testing::EchoServer;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Exchange {
  std::string name;
  nlohmann::json request, response;
  std::string request_bin, response_bin;
};

std::vector<Exchange> corpus() {
  std::vector<Exchange> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(FIXTURE_DIR "/protocol"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto j = nlohmann::json::parse(slurp(f));
    const auto stem = f.parent_path() / f.stem();
    out.push_back({f.stem().string(), j.at("request"), j.at("response"), slurp(stem.string() + ".request.bin"),
                   slurp(stem.string() + ".response.bin")});
  }
  return out;
}

Endpoint tcp(int port, int timeout_ms = 2000) {
  Endpoint e;
  e.port = port;
  e.timeout_ms = timeout_ms;
  return e;
}

LatentPoint point(std::vector<double> v) {
  return LatentPoint{"echo", Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Parse;
}

}  // namespace

TEST_CASE("fixture corpus is present") { CHECK(corpus().size() == 10); }

TEST_CASE("encoding reproduces the fixture bytes") {
  for (const auto& x : corpus()) {
    INFO(x.name);
    CHECK(encode_message(x.request) == x.request_bin);
    CHECK(encode_message(x.response) == x.response_bin);
  }
}

TEST_CASE("hand-checked header bytes") {
  const auto x = corpus().front();
  const std::string body = R"({"id":1,"op":"hello","v":1})";
  REQUIRE(x.request_bin.size() == 4 + body.size());
  CHECK(x.request_bin.substr(0, 4) == std::string("\0\0\0\x1b", 4));
  CHECK(x.request_bin.substr(4) == body);
}

TEST_CASE("builders produce the fixture requests") {
  const auto c = corpus();
  CHECK(hello_request(1) == c[0].request);
  CHECK(generate_request(2, "echo", point({0, -1.5, 2, 0.1}).values) == c[1].request);
  CHECK(classify_request(4, c[1].response.at("image_id"), "echo") == c[3].request);
  CHECK(echo_image_id(point({0, -1.5, 2, 0.1}).values) == c[1].response.at("image_id"));
}

TEST_CASE("echo backend answers the corpus in order") {
  EchoBackend backend(4, "echo");
  for (const auto& x : corpus()) {
    INFO(x.name);
    CHECK(encode_message(backend.handle(x.request)) == x.response_bin);
  }
}

TEST_CASE("decoder handles split and concatenated frames") {
  std::string stream;
  for (const auto& x : corpus()) stream += x.request_bin;
  for (std::size_t step : {std::size_t{1}, std::size_t{3}, std::size_t{7}, stream.size()}) {
    FrameDecoder d;
    std::vector<std::string> bodies;
    for (std::size_t i = 0; i < stream.size(); i += step) {
      d.feed(std::string_view(stream).substr(i, step));
      while (auto b = d.next()) bodies.push_back(*b);
    }
    REQUIRE(bodies.size() == 10);
    CHECK(nlohmann::json::parse(bodies[4]) == corpus()[4].request);
    CHECK(d.buffered() == 0);
  }
}

TEST_CASE("oversized frame headers are rejected") {
  FrameDecoder d;
  d.feed(std::string("\x04\x00\x00\x01", 4));
  CHECK(code_of([&] { d.next(); }) == ErrorCode::Transport);
  FrameDecoder ok;
  ok.feed(std::string("\x00\x00\x00\x02{}", 6));
  CHECK(ok.next() == std::optional<std::string>("{}"));
}

TEST_CASE("parse_endpoint") {
  auto e = parse_endpoint("tcp://localhost:9000");
  CHECK(e.kind == Endpoint::Kind::tcp);
  CHECK(e.host == "localhost");
  CHECK(e.port == 9000);
  e = parse_endpoint("10.0.0.2:81");
  CHECK(e.port == 81);
  e = parse_endpoint("stdio:python3 server.py --dim 8");
  CHECK(e.kind == Endpoint::Kind::stdio);
  CHECK(e.command == std::vector<std::string>{"python3", "server.py", "--dim", "8"});
  CHECK_THROWS_AS(parse_endpoint("tcp://nohost"), Error);
  CHECK_THROWS_AS(parse_endpoint("stdio:"), Error);
  CHECK_THROWS_AS(parse_endpoint("h:99999"), Error);
}

TEST_CASE("TCP round-trip against the echo server") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  const auto& caps = client.hello();
  CHECK(caps.version == 1);
  CHECK(caps.dim == 4);
  CHECK(caps.space == "echo");
  CHECK(client.info().dim == 4);
  CHECK_FALSE(client.info().concurrent);
  const auto z = point({0.25, 1, -3, 1e-3});
  const auto img = client.generate(z);
  CHECK(img.image_id == echo_image_id(z.values));
  CHECK(client.classify(img.image_id, "echo") == doctest::Approx(0.5621765008857981).epsilon(1e-15));
  CHECK(client.retries_used() == 0);
  CHECK(client.last_request_id() == 3);
}

TEST_CASE("server-side errors map to typed errors") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  client.hello();
  CHECK(code_of([&] { client.classify("nope", "echo"); }) == ErrorCode::UnknownImage);
  CHECK(code_of([&] { client.classify("nope", "gender"); }) == ErrorCode::UnknownClassifier);
  // Still usable afterwards.
  CHECK(client.generate(point({1, 2, 3, 4})).image_id.rfind("echo-", 0) == 0);
}

TEST_CASE("wrong dimension is caught before sending") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  client.hello();
  const auto before = server.requests();
  CHECK(code_of([&] { client.generate(point({1, 2, 3})); }) == ErrorCode::DimensionMismatch);
  CHECK(server.requests() == before);
}

TEST_CASE("generate without hello performs the handshake") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  CHECK_FALSE(client.capabilities().has_value());
  client.generate(point({0, 0, 0, 0}));
  CHECK(client.capabilities().has_value());
}

TEST_CASE("version mismatch is reported") {
  EchoServer server({4, "echo", 2, 0});
  BridgeClient client(tcp(server.port()));
  CHECK(code_of([&] { client.hello(); }) == ErrorCode::VersionMismatch);
}

TEST_CASE("nothing listening times out near the deadline") {
  BridgeClient client(tcp(latent_audit::testing::dead_port(), 300));
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { client.hello(); }) == ErrorCode::Timeout);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  // three attempts of 300 ms each
  CHECK(ms >= 850);
  CHECK(ms < 3000);
}

TEST_CASE("a stalled request is retried with a fresh id") {
  EchoServer server({4, "echo", 1, 1});
  BridgeClient client(tcp(server.port(), 300));
  const auto& caps = client.hello();
  CHECK(caps.dim == 4);
  CHECK(client.retries_used() == 1);
  CHECK(client.last_request_id() == 2);
  CHECK(client.generate(point({0, 0, 0, 0})).image_id == echo_image_id(Eigen::VectorXd::Zero(4)));
}

TEST_CASE("retries give up after the configured count") {
  EchoServer server({4, "echo", 1, 100});
  auto ep = tcp(server.port(), 150);
  ep.max_retries = 1;
  BridgeClient client(ep);
  CHECK(code_of([&] { client.hello(); }) == ErrorCode::Timeout);
  CHECK(client.retries_used() == 1);
}

TEST_CASE("client rejects classifiers the server did not announce") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  client.hello();
  CHECK(client.classifier_names() == std::vector<std::string>{"echo"});
  const auto before = server.requests();
  CHECK(code_of([&] { client.classify("x", "other"); }) == ErrorCode::UnknownClassifier);
  CHECK(server.requests() == before);
}

TEST_CASE("stdio transport") {
  Endpoint ep;
  ep.kind = Endpoint::Kind::stdio;
  ep.command = {ECHO_STDIO_SERVER, "6"};
  ep.timeout_ms = 2000;
  BridgeClient client(ep);
  CHECK(client.hello().dim == 6);
  const auto z = point({-2, 0, 0, 0, 0, 1});
  const auto img = client.generate(z);
  CHECK(client.classify(img.image_id, "echo") == doctest::Approx(1 / (1 + std::exp(2.0))));
}

TEST_CASE("missing stdio program is a transport error") {
  Endpoint ep;
  ep.kind = Endpoint::Kind::stdio;
  ep.command = {"/nonexistent/generator"};
  ep.timeout_ms = 500;
  ep.max_retries = 0;
  BridgeClient client(ep);
  const auto c = code_of([&] { client.hello(); });
  CHECK((c == ErrorCode::Transport || c == ErrorCode::Timeout));
}

TEST_CASE("client scores match the server log over many calls") {
  EchoServer server({});
  BridgeClient client(tcp(server.port()));
  client.hello();
  RngStream s(1, "log");
  std::vector<std::pair<std::string, double>> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto z = point({s.normal(), s.normal(), s.normal(), s.normal()});
    const auto img = client.generate(z);
    seen.emplace_back(img.image_id, client.classify(img.image_id, "echo"));
  }
  const auto log = server.backend().score_log();
  REQUIRE(log.size() == seen.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].first == seen[i].first);
    CHECK(log[i].second == seen[i].second);
  }
  CHECK(client.retries_used() == 0);
}
