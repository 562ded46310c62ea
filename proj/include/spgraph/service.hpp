#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spgraph/mrf.hpp"
#include "spgraph/pipeline.hpp"

namespace spgraph {

// Strict RFC 4648 base64 (padding required, no whitespace). An optional
// "data:...;base64," prefix is skipped. Throws FormatError.
std::vector<uint8_t> base64_decode(std::string_view text);
std::string base64_encode(std::span<const uint8_t> bytes);

// HTTP editing service. Endpoints (JSON unless noted):
//   POST /v1/sessions                     {"image": base64 PNG}
//   GET  /v1/sessions/{id}                session summary
//   GET  /v1/sessions/{id}/superpixels    16-bit PNG of node ids
//   GET  /v1/sessions/{id}/graph          graph with current labels
//   GET  /v1/sessions/{id}/mask           8-bit PNG, 0/255
//   GET  /v1/sessions/{id}/polygons       GeoJSON, ?eps=&angle_tol=&min_area=
//   GET  /v1/sessions/{id}/strokes        stroke log
//   POST /v1/sessions/{id}/strokes        one stroke
//   POST /v1/sessions/{id}/undo           drop the last stroke
//   DELETE /v1/sessions/{id}
//   GET  /v1/health
// Every session response carries an X-Session-Version header.
class Service {
 public:
  // A null pipeline answers session creation with 503 until one is set.
  explicit Service(std::shared_ptr<const Pipeline> pipeline, double phi = kDefaultPhi);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void set_pipeline(std::shared_ptr<const Pipeline> pipeline);

  // Binds and returns the port (0 picks a free one). Throws std::runtime_error.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace spgraph
