#pragma once

// AnswerOracle backed by one HTTP endpoint: POST {perception, question},
// read {answer}. Any transport or schema problem is OracleUnavailable.

#include "var/reward.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <string>
#include <string_view>

namespace var {

class HttpOracle final : public AnswerOracle {
 public:
  /// `endpoint` is a full URL such as http://127.0.0.1:8080/answer.
  HttpOracle(std::string endpoint, long timeout_ms) : timeout_ms_(timeout_ms) {
    if (timeout_ms <= 0) throw std::invalid_argument("oracle timeout must be positive");
    const auto scheme = endpoint.find("://");
    if (scheme == std::string::npos || endpoint.compare(0, scheme, "http") != 0) {
      throw std::invalid_argument("oracle endpoint must be an http:// URL: " + endpoint);
    }
    const auto slash = endpoint.find('/', scheme + 3);
    base_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
  }

  std::string answer(std::string_view perception, std::string_view question) override {
    httplib::Client cli(base_);
    const auto t = std::chrono::milliseconds(timeout_ms_);
    cli.set_connection_timeout(t);
    cli.set_read_timeout(t);
    cli.set_write_timeout(t);
    const nlohmann::json body{{"perception", perception}, {"question", question}};
    auto res = cli.Post(path_, body.dump(), "application/json");
    if (!res) throw OracleUnavailable("oracle request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw OracleUnavailable("oracle returned HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body).at("answer").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw OracleUnavailable(std::string("oracle reply is not {answer}: ") + e.what());
    }
  }

 private:
  std::string base_;
  std::string path_;
  long timeout_ms_;
};

}  // namespace var
