#include "spgraph/service.hpp"

#include <array>
#include <atomic>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>

#include "httplib.h"
#include "json.hpp"
#include "spgraph/errors.hpp"

namespace spgraph {

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::vector<uint8_t> base64_decode(std::string_view text) {
  if (text.starts_with("data:")) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos || text.substr(0, comma).find(";base64") == std::string_view::npos) {
      throw FormatError("data URL is not base64");
    }
    text.remove_prefix(comma + 1);
  }
  if (text.empty() || text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::array<int, 256> value{};
  value.fill(-1);
  for (size_t i = 0; i < kAlphabet.size(); ++i) value[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);

  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    uint32_t chunk = 0;
    for (size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v;
      if (c == '=' && last && k >= 2) {
        ++pad;
        v = 0;
      } else {
        v = value[static_cast<unsigned char>(c)];
        if (v < 0 || pad > 0) throw FormatError("invalid base64 character");
      }
      chunk = (chunk << 6) | static_cast<uint32_t>(v);
    }
    out.push_back(static_cast<uint8_t>(chunk >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>(chunk >> 8));
    if (pad < 1) out.push_back(static_cast<uint8_t>(chunk));
  }
  return out;
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    const size_t n = std::min<size_t>(3, bytes.size() - i);
    uint32_t chunk = static_cast<uint32_t>(bytes[i]) << 16;
    if (n > 1) chunk |= static_cast<uint32_t>(bytes[i + 1]) << 8;
    if (n > 2) chunk |= bytes[i + 2];
    out.push_back(kAlphabet[(chunk >> 18) & 63]);
    out.push_back(kAlphabet[(chunk >> 12) & 63]);
    out.push_back(n > 1 ? kAlphabet[(chunk >> 6) & 63] : '=');
    out.push_back(n > 2 ? kAlphabet[chunk & 63] : '=');
  }
  return out;
}

namespace {

using nlohmann::json;

struct Session {
  std::string id;
  TileAnalysis analysis;
  std::vector<Stroke> log;
  EditResult current;
  long version = 1;
  mutable std::shared_mutex mutex;
};

// Thrown inside handlers to produce an error response.
struct HttpError {
  int status;
  std::string message;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Service::Impl {
  httplib::Server server;
  double phi;
  std::shared_ptr<const Pipeline> pipeline;
  std::mutex pipeline_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::shared_mutex sessions_mutex;
  std::mt19937_64 id_rng{std::random_device{}()};
  std::mutex id_mutex;

  Impl(std::shared_ptr<const Pipeline> p, double phi_) : phi(phi_), pipeline(std::move(p)) { routes(); }

  std::shared_ptr<const Pipeline> current_pipeline() {
    std::lock_guard lock(pipeline_mutex);
    return pipeline;
  }

  std::string new_id() {
    std::lock_guard lock(id_mutex);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng()));
    return buf;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError{404, "unknown session " + id};
    return it->second;
  }

  static std::string mask_url(const Session& s) {
    return "/v1/sessions/" + s.id + "/mask?version=" + std::to_string(s.version);
  }

  static void version_header(httplib::Response& res, long version) {
    res.set_header("X-Session-Version", std::to_string(version));
  }

  static double query_double(const httplib::Request& req, const char* name, double fallback) {
    if (!req.has_param(name)) return fallback;
    const std::string v = req.get_param_value(name);
    try {
      size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(d) || d < 0) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw HttpError{400, std::string("query parameter ") + name + " must be a nonnegative number"};
    }
  }

  json summary(const Session& s) const {
    return {{"session_id", s.id},
            {"n_superpixels", s.analysis.graph.n_nodes},
            {"version", s.version},
            {"width", s.analysis.compact.width},
            {"height", s.analysis.compact.height},
            {"strokes", s.log.size()}};
  }

  // Wraps a handler so HttpError and library errors become JSON responses.
  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status, {{"error", e.message}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    const auto p = current_pipeline();
    if (!p) throw HttpError{503, "model checkpoints are not loaded"};
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      throw HttpError{400, "request body is not JSON"};
    }
    if (!body.is_object() || !body.contains("image") || !body["image"].is_string()) {
      throw HttpError{400, "expected {\"image\": base64 PNG}"};
    }
    Raster<float> rgb;
    try {
      const auto bytes = base64_decode(body["image"].get<std::string>());
      rgb = png_to_rgb(decode_png(bytes));
    } catch (const FormatError& e) {
      throw HttpError{400, std::string("malformed image: ") + e.what()};
    }
    auto s = std::make_shared<Session>();
    try {
      s->analysis = p->analyze(rgb, phi);
    } catch (const InvalidArgument& e) {
      throw HttpError{422, std::string("unsupported image dimensions: ") + e.what()};
    }
    s->current = s->analysis.cut;
    s->id = new_id();
    {
      std::unique_lock lock(sessions_mutex);
      sessions[s->id] = s;
    }
    version_header(res, s->version);
    send_json(res, 201, summary(*s));
  }

  // Re-solves from the full stroke log; the caller holds the write lock.
  void replay(Session& s) {
    s.current = edit_cycle(s.analysis.graph, s.analysis.compact, s.log, phi, s.current.labels);
    ++s.version;
  }

  json edit_response(const Session& s) const {
    return {{"version", s.version},
            {"changed_nodes", s.current.changed},
            {"mask_url", mask_url(s)},
            {"warnings", s.current.warnings}};
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Expose-Headers", "X-Session-Version"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Get("/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                 std::shared_lock lock(sessions_mutex);
                 send_json(res, 200, {{"models_loaded", current_pipeline() != nullptr}, {"sessions", sessions.size()}});
               }));

    server.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) { create(req, res); }));

    server.Get(R"(/v1/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mutex);
                 version_header(res, s->version);
                 send_json(res, 200, summary(*s));
               }));

    server.Delete(R"(/v1/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    std::unique_lock lock(sessions_mutex);
                    if (sessions.erase(req.matches[1]) == 0) throw HttpError{404, "unknown session"};
                    res.status = 204;
                  }));

    server.Get(R"(/v1/sessions/([0-9a-f]+)/superpixels)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mutex);
                 const auto png = encode_label_png(s->analysis.compact);
                 version_header(res, s->version);
                 res.set_content(std::string(png.begin(), png.end()), "image/png");
               }));

    server.Get(R"(/v1/sessions/([0-9a-f]+)/graph)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mutex);
                 json j = graph_to_json(s->analysis.graph);
                 j["labels"] = s->current.labels;
                 j["version"] = s->version;
                 version_header(res, s->version);
                 send_json(res, 200, j);
               }));

    server.Get(R"(/v1/sessions/([0-9a-f]+)/mask)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mutex);
                 const auto png = encode_mask_png(s->current.mask);
                 version_header(res, s->version);
                 res.set_content(std::string(png.begin(), png.end()), "image/png");
               }));

    server.Get(R"(/v1/sessions/([0-9a-f]+)/polygons)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 VectorizeOptions opt;
                 opt.epsilon = query_double(req, "eps", opt.epsilon);
                 opt.angle_tol_deg = query_double(req, "angle_tol", opt.angle_tol_deg);
                 opt.min_area = query_double(req, "min_area", opt.min_area);
                 const auto s = find(req.matches[1]);
                 Mask mask;
                 long version;
                 {
                   std::shared_lock lock(s->mutex);
                   mask = s->current.mask;
                   version = s->version;
                 }
                 version_header(res, version);
                 send_json(res, 200, to_geojson(vectorize_mask(mask, opt)));
               }));

    server.Get(R"(/v1/sessions/([0-9a-f]+)/strokes)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mutex);
                 json log = json::array();
                 for (const auto& st : s->log) log.push_back(stroke_to_json(st));
                 version_header(res, s->version);
                 send_json(res, 200, {{"version", s->version}, {"strokes", log}});
               }));

    server.Post(R"(/v1/sessions/([0-9a-f]+)/strokes)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto s = find(req.matches[1]);
                  Stroke stroke;
                  try {
                    stroke = stroke_from_json(json::parse(req.body));
                  } catch (const json::exception&) {
                    throw HttpError{400, "stroke body is not JSON"};
                  } catch (const InvalidArgument& e) {
                    throw HttpError{400, e.what()};
                  }
                  std::unique_lock lock(s->mutex);
                  s->log.push_back(stroke);
                  replay(*s);
                  version_header(res, s->version);
                  send_json(res, 200, edit_response(*s));
                }));

    server.Post(R"(/v1/sessions/([0-9a-f]+)/undo)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto s = find(req.matches[1]);
                  std::unique_lock lock(s->mutex);
                  if (s->log.empty()) throw HttpError{409, "no stroke to undo"};
                  s->log.pop_back();
                  replay(*s);
                  version_header(res, s->version);
                  send_json(res, 200, edit_response(*s));
                }));
  }
};

Service::Service(std::shared_ptr<const Pipeline> pipeline, double phi)
    : impl_(std::make_unique<Impl>(std::move(pipeline), phi)) {}

Service::~Service() { stop(); }

void Service::set_pipeline(std::shared_ptr<const Pipeline> pipeline) {
  std::lock_guard lock(impl_->pipeline_mutex);
  impl_->pipeline = std::move(pipeline);
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace spgraph
