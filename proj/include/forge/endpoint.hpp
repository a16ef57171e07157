// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

// Thin HTTP/JSON clients for remotely served models.
//
// Wire protocol: POST <endpoint> with a JSON body
//   {"kind": "<adapter kind>", "seed": N, "prompt": "...", "images": ["<base64 png>", ...]}
// and a JSON reply carrying one of {"text": ...}, {"value": ...}, {"features": [...]}.
// Optional {"version": "..."} in a reply overrides the reported adapter version.

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "forge/adapters.hpp"

namespace forge {

class Clock {
public:
    using duration = std::chrono::nanoseconds;
    virtual ~Clock() = default;
    virtual duration now() const = 0;
    virtual void sleep_for(duration d) = 0;
};

class SteadyClock final : public Clock {
public:
    duration now() const override;
    void sleep_for(duration d) override;
};

/// Advances only when slept on.
class FakeClock final : public Clock {
public:
    duration now() const override;
    void sleep_for(duration d) override;
    std::vector<duration> sleeps() const;

private:
    mutable std::mutex mu_;
    duration now_{0};
    std::vector<duration> sleeps_;
};

/// Spaces successive acquisitions at least 1/rate seconds apart. rate <= 0 disables limiting.
class RateLimiter {
public:
    RateLimiter(double rate_per_second, std::shared_ptr<Clock> clock);
    void acquire();

private:
    std::mutex mu_;
    Clock::duration interval_{0};
    std::shared_ptr<Clock> clock_;
    bool has_last_ = false;
    Clock::duration last_{0};
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    double multiplier = 2.0;
};

/// Logged request/response pair.
struct Exchange {
    Json request;
    Json response;
    int status = 0;
    int attempt = 0;
};

/// Posts JSON, retries failed transport or 5xx replies with exponential backoff, and
/// keeps a log of every exchange for provenance.
class HttpJsonClient {
public:
    using Transport = std::function<std::pair<int, std::string>(const std::string& url, const std::string& body,
                                                                const std::string& bearer)>;

    HttpJsonClient(std::string url, std::string bearer_token, RetryPolicy retry, double rate_limit,
                   std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>(), Transport transport = {});

    Json post(const Json& body);
    std::vector<Exchange> log() const;

private:
    std::string url_;
    std::string bearer_;
    RetryPolicy retry_;
    std::shared_ptr<Clock> clock_;
    RateLimiter limiter_;
    Transport transport_;
    mutable std::mutex log_mu_;
    std::vector<Exchange> log_;
};

/// cpp-httplib backed transport used by default.
std::pair<int, std::string> http_post(const std::string& url, const std::string& body, const std::string& bearer);

std::shared_ptr<HttpJsonClient> make_client(const AdapterConfig& config, std::shared_ptr<Clock> clock = nullptr);

class EndpointTextLlm final : public TextLlm {
public:
    explicit EndpointTextLlm(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override;
    std::string complete(const std::string& prompt, std::uint64_t seed) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
    mutable std::mutex mu_;
    std::string version_ = "endpoint-llm";
};

class EndpointCaptioner final : public Captioner {
public:
    explicit EndpointCaptioner(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override { return "endpoint-captioner"; }
    std::string caption(std::span<const Image> frames, std::uint64_t seed) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
};

class EndpointJudge final : public Judge {
public:
    explicit EndpointJudge(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override { return "endpoint-judge"; }
    std::string judge(std::span<const Image> images, const std::string& prompt, std::uint64_t seed) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
};

class EndpointImageEncoder final : public ImageEncoder {
public:
    explicit EndpointImageEncoder(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override { return "endpoint-image-encoder"; }
    Eigen::VectorXd encode(const Image& image) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
};

class EndpointClip final : public MetricClip {
public:
    explicit EndpointClip(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override { return "endpoint-clip"; }
    double score(const Image& image, const std::string& text) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
};

class EndpointLpips final : public MetricLpips {
public:
    explicit EndpointLpips(std::shared_ptr<HttpJsonClient> client) : client_(std::move(client)) {}
    std::string version() const override { return "endpoint-lpips"; }
    double distance(const Image& a, const Image& b) override;

private:
    std::shared_ptr<HttpJsonClient> client_;
};

} // namespace forge
