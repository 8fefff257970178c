// Serves the deterministic mock model over HTTP on /v1/chat/completions, for
// exercising the real HTTP transport without a model. --fail-first N answers
// the first N requests with 503 to demonstrate retries.

#include <atomic>
#include <iostream>

#include <CLI11.hpp>

#include "lexforge/mock.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mock chat-completion endpoint"};
  std::string host = "127.0.0.1";
  int port = 8089;
  int fail_first = 0;
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port");
  app.add_option("--fail-first", fail_first, "Reply 503 to the first N requests");
  CLI11_PARSE(app, argc, argv);

  std::atomic<int> seen{0};
  httplib::Server server;
  server.Post(R"(.*/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    if (seen.fetch_add(1) < fail_first) {
      res.status = 503;
      res.set_content(R"({"error":"warming up"})", "application/json");
      return;
    }
    try {
      const auto resp = lexforge::mock_respond(lexforge::request_from_body(nlohmann::json::parse(req.body)));
      res.set_content(lexforge::response_body(resp).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
