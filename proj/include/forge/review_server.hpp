// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

// JSON API over a ReviewStore.
//
//   GET  /api/v1/health
//   GET  /api/v1/records?status=&branch=&category=&page=&page_size=
//   GET  /api/v1/records/{id}
//   POST /api/v1/records/{id}/decision
//        {"action", "revision", "reviewer", "revised_instruction"?, "regeneration_hint"?,
//         "alternate_generator"?, "note"?}
//   GET  /api/v1/stats
//   GET  /images/{file}
//
// Errors reply {"error": message, "field"?: name} with 400 (malformed body), 401 (token),
// 404, 409 (conflict) or 422 (validation).

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "forge/review_service.hpp"

namespace httplib {
class Server;
}

namespace forge {

struct ReviewServerOptions {
    std::string token;                 ///< when set, /api requests need "Authorization: Bearer <token>"
    std::filesystem::path ui_dir;      ///< static files mounted at / when set
    std::size_t max_page_size = 200;
};

class ReviewServer {
public:
    ReviewServer(ReviewStore& store, ReviewServerOptions options = {});
    ~ReviewServer();

    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Returns the bound port, or -1.
    int bind_to_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen_after_bind();
    void wait_until_ready() const;
    void stop();

private:
    void install_routes();

    ReviewStore& store_;
    ReviewServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace forge
