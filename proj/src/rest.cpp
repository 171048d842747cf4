#include <csignal>
#include <cstdio>
#include <httplib.h>
#include <json.hpp>

#include "invx/error.hpp"
#include "invx/export.hpp"
#include "invx/service.hpp"
#include "invx/util.hpp"

namespace invx {
namespace {

using json = nlohmann::json;

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict:
    case ErrorCode::JobNotReviewable: return 409;
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::UnknownField:
    case ErrorCode::NormalizationFailed: return 422;
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownFormat:
    case ErrorCode::DecodeError: return 400;
    default: return 500;
  }
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  std::string msg = e.what();
  std::string prefix = std::string(to_string(e.code())) + ": ";
  if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
  send_error(res, http_status(e.code()), to_string(e.code()), msg);
}

json job_view(const JobRecord& r) {
  json j = json::parse(job_to_json(r));
  j.erase("tokens");
  j["validation_report"] = j["invoice"].is_null() ? json(nullptr) : j["invoice"]["validation_report"];
  return j;
}

json audit_view(const AuditEvent& e) { return json::parse(audit_to_json(e)); }

}  // namespace

struct RestServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

RestServer::RestServer(Service& service, std::string ui_dir) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Service& svc = service;
  std::string token = svc.config().auth_token;

  srv.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
    if (token.empty() || req.path.rfind("/v1/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + token) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  });

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  srv.Post("/v1/invoices", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::string filename;
    Bytes bytes;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) throw Error(ErrorCode::InvalidArgument, "multipart field 'file' is required");
      auto f = req.get_file_value("file");
      filename = f.filename;
      bytes.assign(f.content.begin(), f.content.end());
    } else {
      json body = json::parse(req.body);
      filename = body.value("filename", "upload");
      bytes = base64_decode(body.at("content_base64").get<std::string>());
    }
    std::string id = svc.submit(filename, std::move(bytes));
    res.status = 202;
    res.set_content(json{{"job_id", id}}.dump(), "application/json");
  });

  srv.Get(R"(/v1/invoices/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    res.set_content(job_view(*svc.get(req.matches[1])).dump(), "application/json");
  });

  srv.Get(R"(/v1/invoices/([^/]+)/audit)", [&svc](const httplib::Request& req, httplib::Response& res) {
    json events = json::array();
    for (const auto& e : svc.audit(req.matches[1])) events.push_back(audit_view(e));
    res.set_content(json{{"events", events}}.dump(), "application/json");
  });

  srv.Get(R"(/v1/invoices/([^/]+)/page/(\d+)\.png)", [&svc](const httplib::Request& req, httplib::Response& res) {
    Bytes png = svc.page_png(req.matches[1], std::stoi(req.matches[2]));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });

  srv.Get("/v1/review/queue", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 50;
    if (req.has_param("limit")) {
      try {
        long long v = std::stoll(req.get_param_value("limit"));
        if (v < 1) throw std::out_of_range("limit");
        limit = static_cast<std::size_t>(v);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, "limit must be a positive integer");
      }
    }
    json items = json::array();
    for (const auto& r : svc.review_queue(limit)) {
      json low = json::array();
      for (const auto& [f, fv] : r->invoice->fields)
        if (fv.confidence < svc.config().pipeline.review_threshold) low.push_back(field_name(f));
      items.push_back({{"job_id", r->id},
                       {"filename", r->filename},
                       {"revision", r->revision},
                       {"overall_confidence", r->invoice->overall_confidence},
                       {"failing_checks", r->invoice->validation_report.failing()},
                       {"low_confidence_fields", low}});
    }
    res.set_content(json{{"items", items}}.dump(), "application/json");
  });

  srv.Post(R"(/v1/review/([^/]+)/corrections)", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body);
    std::vector<Correction> corrections;
    for (const auto& c : body.at("corrections"))
      corrections.push_back(
          {c.at("field").get<std::string>(), c.at("new_value").get<std::string>(), c.value("note", std::string())});
    auto rec = svc.correct(req.matches[1], body.value("revision", 0), corrections,
                           body.value("reviewer", std::string("reviewer")));
    res.set_content(job_view(*rec).dump(), "application/json");
  });

  srv.Get("/v1/export", [&svc](const httplib::Request& req, httplib::Response& res) {
    auto blob = svc.export_invoices(req.get_param_value("format"), req.get_param_value("status"));
    res.set_content(blob.body, blob.content_type);
  });

  if (!ui_dir.empty()) srv.set_mount_point("/ui", ui_dir);
}

RestServer::~RestServer() { stop(); }

int RestServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void RestServer::listen() { impl_->server.listen_after_bind(); }

void RestServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

int run_service(const AppConfig& cfg, const std::filesystem::path& store, int port, std::unique_ptr<LlmClient> llm) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by every thread started below

  Service service(cfg, store, std::move(llm));
  service.start();
  std::string ui_dir;
  if (const char* d = std::getenv("INVX_UI_DIR")) ui_dir = d;
  RestServer server(service, ui_dir);
  int bound = server.bind("0.0.0.0", port);
  std::printf("listening on port %d\n", bound);
  std::fflush(stdout);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  service.stop();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);  // wakes sigwait when listen ended on its own
    waiter.join();
  }
  return 0;
}

}  // namespace invx
