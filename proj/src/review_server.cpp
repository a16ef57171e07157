// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/review_server.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "forge/errors.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    Json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    reply(res, status, body);
}

std::size_t parse_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 1) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ValidationError(key, "expected a positive integer, got '" + v + "'");
    }
}

std::string content_type(const fs::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    return "application/octet-stream";
}

/// Runs `fn`, mapping library errors to status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const NotFoundError& e) {
        reply_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        reply_error(res, 409, e.what());
    } catch (const ValidationError& e) {
        reply_error(res, 422, e.what(), e.field());
    } catch (const Json::exception& e) {
        reply_error(res, 422, e.what());
    } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
    }
}

ReviewDecision decision_from_body(const std::string& id, const Json& body) {
    if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
    ReviewDecision d;
    d.record_id = id;
    if (!body.contains("action") || !body["action"].is_string()) throw ValidationError("action", "required string");
    d.action = parse_action(body["action"].get<std::string>());
    if (!body.contains("revision") || !body["revision"].is_number_unsigned()) {
        throw ValidationError("revision", "required non-negative integer");
    }
    d.expected_revision = body["revision"].get<std::uint64_t>();
    d.reviewer = body.value("reviewer", std::string("anonymous"));
    auto opt_string = [&](const char* key, std::optional<std::string>& out) {
        if (!body.contains(key) || body[key].is_null()) return;
        if (!body[key].is_string()) throw ValidationError(key, "expected a string");
        out = body[key].get<std::string>();
    };
    opt_string("revised_instruction", d.revised_instruction);
    opt_string("regeneration_hint", d.regeneration_hint);
    opt_string("note", d.note);
    if (body.contains("alternate_generator")) {
        if (!body["alternate_generator"].is_boolean()) throw ValidationError("alternate_generator", "expected a boolean");
        d.alternate_generator = body["alternate_generator"].get<bool>();
    }
    return d;
}

} // namespace

ReviewServer::ReviewServer(ReviewStore& store, ReviewServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
    auto& srv = *server_;

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (options_.token.empty() || req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") == "Bearer " + options_.token) {
            return httplib::Server::HandlerResponse::Unhandled;
        }
        reply_error(res, 401, "missing or invalid token");
        return httplib::Server::HandlerResponse::Handled;
    });

    srv.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });

    srv.Get("/api/v1/records", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            RecordFilter f;
            if (req.has_param("status") && !req.get_param_value("status").empty()) {
                f.status = parse_status(req.get_param_value("status"));
            }
            if (req.has_param("branch") && !req.get_param_value("branch").empty()) {
                f.branch = parse_branch(req.get_param_value("branch"));
            }
            if (req.has_param("category") && !req.get_param_value("category").empty()) {
                f.category = parse_category(req.get_param_value("category"));
            }
            f.page = parse_size(req, "page", 1);
            f.page_size = parse_size(req, "page_size", 20);
            if (f.page_size > options_.max_page_size) {
                throw ValidationError("page_size", "at most " + std::to_string(options_.max_page_size));
            }
            reply(res, 200, store_.list(f).to_json());
        });
    });

    srv.Get(R"(/api/v1/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const auto v = store_.get(id);
            if (!v) throw NotFoundError("no record " + id);
            reply(res, 200, to_json(*v));
        });
    });

    srv.Post(R"(/api/v1/records/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        Json body;
        try {
            body = Json::parse(req.body);
        } catch (const Json::parse_error& e) {
            reply_error(res, 400, std::string("malformed JSON: ") + e.what());
            return;
        }
        guarded(res, [&] {
            if (!store_.get(id)) throw NotFoundError("no record " + id);
            reply(res, 200, to_json(store_.submit(decision_from_body(id, body))));
        });
    });

    srv.Get("/api/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            Json j = store_.stats().to_json();
            j["queued_jobs"] = store_.queued_jobs();
            reply(res, 200, j);
        });
    });

    srv.Get(R"(/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        const fs::path rel = fs::path(std::string(req.matches[1])).lexically_normal();
        const bool escapes = rel.is_absolute() || rel.empty() || *rel.begin() == "..";
        const fs::path images = fs::weakly_canonical(store_.dataset_root() / "images");
        const fs::path full = fs::weakly_canonical(images / rel);
        const auto [end, _] = std::mismatch(images.begin(), images.end(), full.begin(), full.end());
        if (escapes || end != images.end()) {
            reply_error(res, 404, "no such image");
            return;
        }
        std::ifstream in(full, std::ios::binary);
        if (!in || !fs::is_regular_file(full)) {
            reply_error(res, 404, "no such image");
            return;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        res.set_content(buf.str(), content_type(full));
    });

    if (!options_.ui_dir.empty()) {
        if (!srv.set_mount_point("/", options_.ui_dir.string())) {
            throw NotFoundError("ui directory not found: " + options_.ui_dir.string());
        }
    }
}

int ReviewServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }
bool ReviewServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }
bool ReviewServer::listen_after_bind() { return server_->listen_after_bind(); }
void ReviewServer::wait_until_ready() const { server_->wait_until_ready(); }
void ReviewServer::stop() {
    if (server_) server_->stop();
}

} // namespace forge
