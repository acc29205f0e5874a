#pragma once

#include <memory>
#include <string>

namespace poisint {

struct ServiceOptions {
  std::string cors_origin = "*";
  unsigned job_workers = 2;    // jobs solved concurrently
  unsigned solve_workers = 1;  // threads inside each solve
};

// HTTP/JSON front end. Jobs are solved asynchronously on a small pool:
//
//   POST /solve                  -> 202 {job_id} | 400 {fields} | 422 {margin}
//   GET  /jobs/{id}              -> status, timings, grid metadata when done
//   GET  /jobs/{id}/cdf?x=       -> {x, F, truncated}
//   GET  /jobs/{id}/quantile?p=  -> {p, x, truncated}
//   GET  /jobs/{id}/density?window=&delta1=&format=json|csv
//   GET  /jobs/{id}/csv          -> the CSV the command line writes
//   GET  /health
//
// Unknown ids give 404, queries on unfinished jobs 409.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port, or -1 when binding failed.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop(). Returns false when
  // binding failed.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace poisint
