#pragma once

#include <mutex>
#include <string>
#include <string_view>

#include "catos/util.hpp"

namespace catos::api {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

/// The dashboard's JSON API over an archive folder, independent of any HTTP
/// server.
///
///   GET /api/sessions
///   GET /api/sessions/{id}
///   GET /api/sessions/{id}/trials
///   GET /api/sessions/{id}/movement/{clip}
///   GET /api/performance?ids=a,b,c
///   GET /api/schema-config
///   PUT /api/schema-config[?revision=N]
///
/// Errors come back as {"error": "..."} or, for a rejected config,
/// {"errors": [...]}. The stored schema config carries a revision number; a
/// PUT naming a stale revision gets 409.
class Service {
 public:
  explicit Service(fs::path archive_root);

  Response handle(std::string_view method, std::string_view path, std::string_view query, std::string_view body);

  static constexpr const char* kSchemaConfigFile = "schema-config.json";

 private:
  Response get_schema_config() const;
  Response put_schema_config(std::string_view query, std::string_view body);

  fs::path root_;
  std::mutex write_mu_;
};

/// Value of `key` in an `a=1&b=2` query string, percent-decoded.
std::string query_param(std::string_view query, std::string_view key);

}  // namespace catos::api
