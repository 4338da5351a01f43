// Echo backend over stdin/stdout frames, for the stdio transport tests.
#include <cstdio>
#include <cstdlib>
#include <string>

#include <unistd.h>

#include "echo_server.hpp"
#include "latent_audit/framing.hpp"

int main(int argc, char** argv) {
  const int dim = argc > 1 ? std::atoi(argv[1]) : 4;
  latent_audit::testing::EchoBackend backend(dim, "echo");
  latent_audit::bridge::FrameDecoder decoder;
  char buf[65536];
  for (;;) {
    const ssize_t n = ::read(STDIN_FILENO, buf, sizeof buf);
    if (n <= 0) return 0;
    decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    while (auto body = decoder.next()) {
      const auto response = backend.handle(nlohmann::json::parse(*body));
      const std::string out = latent_audit::bridge::encode_message(response);
      if (::write(STDOUT_FILENO, out.data(), out.size()) != static_cast<ssize_t>(out.size())) return 1;
    }
  }
}
