#include "poisint/service.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "poisint/cli.hpp"
#include "poisint/density.hpp"
#include "poisint/errors.hpp"
#include "poisint/io.hpp"

namespace poisint {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

enum class JobStatus { Pending, Running, Done, Failed };

const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Pending: return "pending";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "unknown";
}

// `report` and `error` are written once by the worker before the status is
// published with release ordering; readers check the status first.
struct Job {
  std::string id;
  RunConfig config;
  std::atomic<JobStatus> status{JobStatus::Pending};
  std::atomic<double> progress{0.0};
  Clock::time_point created = Clock::now();
  std::atomic<Clock::rep> started{0};
  std::atomic<Clock::rep> finished{0};
  std::optional<SolveReport> report;
  std::string error;
};

double seconds_between(Clock::rep from, Clock::rep to) {
  return std::chrono::duration<double>(Clock::duration(to - from)).count();
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send(res, status, json{{"error", message}});
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

json plan_json(const SegmentPlan& plan) {
  json out = json::array();
  for (const auto& p : plan)
    out.push_back({{"t_start", p.segment.t_start},
                   {"t_end", p.segment.t_end},
                   {"class", to_string(p.segment.cls)},
                   {"reduction", to_string(p.reduction)}});
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread listener;

  std::shared_mutex table_mutex;
  std::unordered_map<std::string, std::shared_ptr<Job>> jobs;

  std::mutex queue_mutex;
  std::condition_variable queue_cv;
  std::deque<std::shared_ptr<Job>> queue;
  bool stopping = false;
  std::vector<std::thread> workers;

  std::string nonce;
  std::atomic<std::uint64_t> counter{0};

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    std::random_device rd;
    std::ostringstream s;
    s << std::hex << rd();
    nonce = s.str();
    routes();
    for (unsigned i = 0; i < std::max(1u, options.job_workers); ++i) workers.emplace_back([this] { work(); });
  }

  ~Impl() {
    server.stop();
    if (listener.joinable()) listener.join();
    {
      std::lock_guard lock(queue_mutex);
      stopping = true;
    }
    queue_cv.notify_all();
    for (auto& w : workers) w.join();
  }

  void work() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(queue_mutex);
        queue_cv.wait(lock, [this] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = std::move(queue.front());
        queue.pop_front();
      }
      job->started = Clock::now().time_since_epoch().count();
      job->status.store(JobStatus::Running, std::memory_order_release);
      JobStatus final_status = JobStatus::Done;
      try {
        job->report = execute(job->config, options.solve_workers, [&job](std::size_t done, std::size_t total) {
          if (total > 0) job->progress = static_cast<double>(done) / static_cast<double>(total);
        });
        job->progress = 1.0;
      } catch (const std::exception& e) {
        job->error = e.what();
        final_status = JobStatus::Failed;
      }
      job->finished = Clock::now().time_since_epoch().count();
      job->status.store(final_status, std::memory_order_release);
    }
  }

  std::shared_ptr<Job> find(const std::string& id) {
    std::shared_lock lock(table_mutex);
    auto it = jobs.find(id);
    return it == jobs.end() ? nullptr : it->second;
  }

  std::string next_id() { return nonce + "-" + std::to_string(++counter); }

  // Looks up a finished job for the query endpoints, answering 404/409 itself.
  std::shared_ptr<Job> finished_job(const httplib::Request& req, httplib::Response& res) {
    auto job = find(req.matches[1]);
    if (!job) {
      send_error(res, 404, "unknown job id");
      return nullptr;
    }
    JobStatus s = job->status.load(std::memory_order_acquire);
    if (s != JobStatus::Done) {
      send(res, 409, json{{"error", "job is not done"}, {"status", to_string(s)}});
      return nullptr;
    }
    return job;
  }

  void post_solve(const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      send_error(res, 400, "request body must be a JSON object");
      return;
    }

    json fields = json::array();
    auto fail = [&fields](const std::string& field, const std::string& message, std::optional<std::size_t> offset) {
      json f{{"field", field}, {"message", message}};
      if (offset) f["offset"] = *offset;
      fields.push_back(std::move(f));
    };

    RunConfig cfg;
    std::optional<Expression> n_expr;
    for (const char* key : {"g", "n"}) {
      if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty()) {
        fail(key, "required non-empty expression string", std::nullopt);
        continue;
      }
      std::string text = body[key].get<std::string>();
      try {
        Expression e = Expression::parse(text);
        if (std::string(key) == "n") n_expr = e;
      } catch (const SyntaxError& e) {
        fail(key, e.what(), e.offset());
      } catch (const UnknownIdentifier& e) {
        fail(key, e.what(), e.offset());
      }
      (std::string(key) == "g" ? cfg.g : cfg.n) = text;
    }
    struct NumberField {
      const char* key;
      double* target;
    };
    for (NumberField nf : {NumberField{"delta", &cfg.delta}, NumberField{"h", &cfg.h}, NumberField{"T", &cfg.T},
                           NumberField{"x_max", &cfg.x_max}}) {
      if (!body.contains(nf.key) || !body[nf.key].is_number()) {
        fail(nf.key, "required number", std::nullopt);
        continue;
      }
      double v = body[nf.key].get<double>();
      if (!(v > 0.0) || !std::isfinite(v)) fail(nf.key, "must be positive and finite", std::nullopt);
      *nf.target = v;
    }
    if (body.contains("x_min") && !body["x_min"].is_null()) {
      if (!body["x_min"].is_number() || !(body["x_min"].get<double>() <= 0.0))
        fail("x_min", "must be a number <= 0", std::nullopt);
      else
        cfg.x_min = body["x_min"].get<double>();
    }
    if (body.contains("breakpoints") && !body["breakpoints"].is_null()) {
      const json& b = body["breakpoints"];
      bool ok = b.is_array();
      if (ok)
        for (const auto& v : b) ok = ok && v.is_number();
      if (ok)
        cfg.breakpoints = b.get<std::vector<double>>();
      else
        fail("breakpoints", "must be an array of numbers", std::nullopt);
    }
    if (body.contains("atom_pinning")) {
      if (!body["atom_pinning"].is_boolean())
        fail("atom_pinning", "must be a boolean", std::nullopt);
      else
        cfg.atom_pinning = body["atom_pinning"].get<bool>();
    }

    std::optional<ControlDensity> density;
    if (fields.empty()) try {
        density.emplace(*n_expr, cfg.T);
      } catch (const Error& e) {
        fail("n", e.what(), std::nullopt);
      }
    if (!fields.empty()) {
      send(res, 400, json{{"error", "invalid request"}, {"fields", fields}});
      return;
    }

    double n_star = sup_control(*density, cfg.T);
    double margin = stability_check(cfg.h, n_star);
    if (margin <= 0.0) {
      send(res, 422, json{{"error", StabilityViolation(margin).what()}, {"margin", margin}, {"n_star", n_star}});
      return;
    }

    try {
      (void)Mesh(cfg.delta, 0.0, cfg.x_max);
    } catch (const Error& e) {
      fail("x_max", e.what(), std::nullopt);
    }
    if (cfg.x_min) try {
        (void)Mesh(cfg.delta, *cfg.x_min, cfg.x_max);
      } catch (const Error& e) {
        fail("x_min", e.what(), std::nullopt);
      }
    if (!fields.empty()) {
      send(res, 400, json{{"error", "invalid request"}, {"fields", fields}});
      return;
    }

    auto job = std::make_shared<Job>();
    job->id = next_id();
    job->config = std::move(cfg);
    {
      std::unique_lock lock(table_mutex);
      jobs.emplace(job->id, job);
    }
    {
      std::lock_guard lock(queue_mutex);
      queue.push_back(job);
    }
    queue_cv.notify_one();
    res.set_header("Location", "/jobs/" + job->id);
    send(res, 202, json{{"job_id", job->id}});
  }

  void get_job(const httplib::Request& req, httplib::Response& res) {
    auto job = find(req.matches[1]);
    if (!job) {
      send_error(res, 404, "unknown job id");
      return;
    }
    JobStatus s = job->status.load(std::memory_order_acquire);
    auto now = Clock::now().time_since_epoch().count();
    auto created = job->created.time_since_epoch().count();
    Clock::rep started = job->started, finished = job->finished;
    json timings{{"queued_seconds", seconds_between(created, started ? started : now)}};
    if (started) timings["run_seconds"] = seconds_between(started, finished ? finished : now);

    json out{{"job_id", job->id},
             {"status", to_string(s)},
             {"config", to_json(job->config)},
             {"progress", job->progress.load()},
             {"timings", timings}};
    if (s == JobStatus::Failed) out["error"] = job->error;
    if (s == JobStatus::Done) {
      const SolveReport& r = *job->report;
      out["mesh"] = mesh_json(r.grid.mesh);
      out["atoms"] = atoms_json(r.grid.atoms);
      out["mass_captured"] = r.grid.mass_captured();
      out["stability_margin"] = r.stability_margin;
      out["warnings"] = r.warnings;
      out["plan"] = plan_json(r.plan);
    }
    send(res, 200, out);
  }

  void get_cdf(const httplib::Request& req, httplib::Response& res) {
    auto job = finished_job(req, res);
    if (!job) return;
    auto x = parse_number(req.get_param_value("x"));
    if (!x) {
      send_error(res, 400, "query parameter x must be a finite number");
      return;
    }
    const CdfGrid& F = job->report->grid;
    send(res, 200,
         json{{"x", *x},
              {"F", cdf_at(F, *x)},
              {"truncated", *x > F.mesh.x_max()},
              {"mass_captured", F.mass_captured()}});
  }

  void get_quantile(const httplib::Request& req, httplib::Response& res) {
    auto job = finished_job(req, res);
    if (!job) return;
    auto p = parse_number(req.get_param_value("p"));
    if (!p || *p < 0.0 || *p > 1.0) {
      send_error(res, 400, "query parameter p must lie in [0, 1]");
      return;
    }
    const CdfGrid& F = job->report->grid;
    // Smallest node with F >= p; when p exceeds the captured mass the answer
    // lies beyond the mesh and x_max is reported as truncated.
    for (std::size_t j = 0; j < F.values.size(); ++j) {
      if (F.values[j] >= *p) {
        send(res, 200, json{{"p", *p}, {"x", F.mesh.node(j)}, {"truncated", false}});
        return;
      }
    }
    send(res, 200, json{{"p", *p}, {"x", F.mesh.x_max()}, {"truncated", true}});
  }

  void get_density(const httplib::Request& req, httplib::Response& res) {
    auto job = finished_job(req, res);
    if (!job) return;
    std::optional<double> window, delta1;
    for (auto [name, target] : {std::pair{"window", &window}, std::pair{"delta1", &delta1}}) {
      if (!req.has_param(name)) continue;
      *target = parse_number(req.get_param_value(name));
      if (!*target) {
        send_error(res, 400, std::string("query parameter ") + name + " must be a finite number");
        return;
      }
    }
    std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
    if (format != "json" && format != "csv") {
      send_error(res, 400, "format must be json or csv");
      return;
    }
    try {
      DensityGrid d = central_difference_density(job->report->grid, delta1);
      if (window) d = smooth_density(d, *window);
      if (format == "csv")
        res.set_content(to_csv(d), "text/csv");
      else
        send(res, 200, to_json(d, meta_of(job->config)));
    } catch (const UserError& e) {
      send_error(res, 400, e.what());
    }
  }

  void get_csv(const httplib::Request& req, httplib::Response& res) {
    auto job = finished_job(req, res);
    if (!job) return;
    res.set_header("Content-Disposition", "attachment; filename=\"cdf-" + job->id + ".csv\"");
    res.set_content(to_csv(job->report->grid), "text/csv");
  }

  void routes() {
    using httplib::Request;
    using httplib::Response;
    server.Post("/solve", [this](const Request& q, Response& r) { post_solve(q, r); });
    server.Get(R"(/jobs/([^/]+))", [this](const Request& q, Response& r) { get_job(q, r); });
    server.Get(R"(/jobs/([^/]+)/cdf)", [this](const Request& q, Response& r) { get_cdf(q, r); });
    server.Get(R"(/jobs/([^/]+)/quantile)", [this](const Request& q, Response& r) { get_quantile(q, r); });
    server.Get(R"(/jobs/([^/]+)/density)", [this](const Request& q, Response& r) { get_density(q, r); });
    server.Get(R"(/jobs/([^/]+)/csv)", [this](const Request& q, Response& r) { get_csv(q, r); });
    server.Get("/health", [](const Request&, Response& r) { send(r, 200, json{{"status", "ok"}}); });
    server.Options(R"(.*)", [this](const Request&, Response& r) {
      r.status = 204;
      r.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      r.set_header("Access-Control-Allow-Headers", "Content-Type");
      r.set_header("Access-Control-Max-Age", "600");
    });
    server.set_post_routing_handler([this](const Request&, Response& r) {
      r.set_header("Access-Control-Allow-Origin", options.cors_origin);
    });
    server.set_exception_handler([](const Request&, Response& r, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(r, 500, what);
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) return -1;
  } else if (!impl_->server.bind_to_port(host, port)) {
    return -1;
  }
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool Service::listen(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) return false;
  return impl_->server.listen_after_bind();
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace poisint
