// Copyright Contributors to the lcnerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace lcnerf {

struct ServiceOptions {
  /// Directory holding `*.lcnf` checkpoints; requests name them relative to it.
  std::string checkpoint_dir = ".";
  /// Largest render edge accepted by the render/mask endpoints.
  int64_t max_size = 256;
  /// Edit jobs keep a preview bank every this many iterations.
  int64_t preview_every = 10;
};

/// HTTP facade under `/api/v1`:
///
///   POST /sessions                     JSON {checkpoint, seed, azimuth?, elevation?}
///                                      or multipart {checkpoint, image, mask, ...}
///   GET  /sessions/{id}                session info, schema names and palette
///   GET  /sessions/{id}/render         PNG; query azimuth, elevation, size
///   GET  /sessions/{id}/mask           indexed PNG; same query
///   GET  /sessions/{id}/latents        LCLW file of the current bank
///   POST /sessions/{id}/edits          multipart {mask_png, region_ids, iterations?}
///   POST /sessions/{id}/latents/swap   JSON {region_id | "all", which, donor_session}
///                                      or multipart with an LCLW `donor` file
///   GET  /jobs/{id}                    {status, iteration, budget, loss, preview_url}
///   GET  /jobs/{id}/preview            PNG mask of the latest preview bank
///
/// Errors are JSON {code, message, detail} with 400/404/409/422 statuses.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to `host` on a free port and returns it.
  int bind_any_port(const std::string& host);
  /// Binds to `host:port`; returns false on failure.
  bool bind(const std::string& host, int port);
  /// Serves until stop(); call after a successful bind.
  bool listen();
  void stop();
  /// Blocks until no edit or inversion job is running.
  void wait_idle();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lcnerf
