#include "sketchteach/http_api.hpp"

#include <charconv>
#include <sstream>

namespace sketchteach {

Vec3 parse_point(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<double> vals;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("start: expected x,y,z numbers");
    }
    if (used != part.size() || !std::isfinite(v)) throw std::invalid_argument("start: expected x,y,z numbers");
    vals.push_back(v);
  }
  if (vals.size() != 3) throw std::invalid_argument("start: expected exactly 3 comma-separated numbers");
  return {vals[0], vals[1], vals[2]};
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(dump_json(body), "application/json");
}

template <class T>
T query_number(const httplib::Request& req, const char* key, T fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string s = req.get_param_value(key);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ServiceError(400, std::string("query parameter ") + key + ": expected integer");
  return v;
}

std::optional<Vec3> query_start(const httplib::Request& req) {
  if (!req.has_param("start")) return std::nullopt;
  try {
    return parse_point(req.get_param_value("start"));
  } catch (const std::invalid_argument& e) {
    throw ServiceError(400, e.what());
  }
}

std::optional<std::uint64_t> query_seed(const httplib::Request& req) {
  if (!req.has_param("seed")) return std::nullopt;
  return query_number<std::uint64_t>(req, "seed", 0);
}

Json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return Json::object();
    throw ServiceError(400, "request body must be JSON");
  }
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ServiceError(400, std::string("malformed JSON: ") + e.what());
  }
}

std::string content_type_for(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

// Maps thrown errors to JSON error responses.
Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.http_status(), Json{{"error", e.what()}, {"details", e.details()}});
    } catch (const ValidationError& e) {
      send_json(res, 400, Json{{"error", e.what()}, {"details", {{"errors", e.errors()}}}});
    } catch (const std::exception& e) {
      send_json(res, 500, Json{{"error", e.what()}, {"details", Json::object()}});
    }
  };
}

}  // namespace

void register_routes(httplib::Server& server, SessionStore& store) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty())
      send_json(res, res.status, Json{{"error", httplib::status_message(res.status)}, {"details", Json::object()}});
  });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Post("/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 201, store.create(parse_body(req, false)));
  }));

  server.Get(R"(/sessions/([^/]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, store.get(req.matches[1]));
  }));

  server.Post(R"(/sessions/([^/]+)/views/([^/]+)/sketches)",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                std::optional<std::string> key;
                if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
                send_json(res, 201, store.submit_sketches(req.matches[1], req.matches[2], parse_body(req, false), key));
              }));

  server.Post(R"(/sessions/([^/]+)/train)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 202, store.start_training(req.matches[1], parse_body(req, true)));
  }));

  server.Get(R"(/sessions/([^/]+)/samples)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200,
              store.sample(req.matches[1], query_number<int>(req, "n", 1), query_start(req), query_seed(req),
                           query_number<int>(req, "timesteps", 100)));
  }));

  server.Get(R"(/sessions/([^/]+)/overlay/([^/]+))",
             guarded([&store](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200,
                         store.overlay(req.matches[1], req.matches[2], query_number<int>(req, "n", 5), query_start(req),
                                       query_seed(req), query_number<int>(req, "timesteps", 100)));
             }));

  server.Get(R"(/sessions/([^/]+)/report)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, store.report(req.matches[1]));
  }));

  server.Get(R"(/sessions/([^/]+)/images/([^/]+))",
             guarded([&store](const httplib::Request& req, httplib::Response& res) {
               const auto path = store.image_path(req.matches[1], req.matches[2]);
               res.status = 200;
               res.set_content(read_text_file(path), content_type_for(path));
             }));
}

}  // namespace sketchteach
