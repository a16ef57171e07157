// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/endpoint.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "forge/image.hpp"

namespace forge {

Clock::duration SteadyClock::now() const { return std::chrono::steady_clock::now().time_since_epoch(); }

void SteadyClock::sleep_for(duration d) { std::this_thread::sleep_for(d); }

Clock::duration FakeClock::now() const {
    std::lock_guard lock(mu_);
    return now_;
}

void FakeClock::sleep_for(duration d) {
    std::lock_guard lock(mu_);
    now_ += d;
    sleeps_.push_back(d);
}

std::vector<Clock::duration> FakeClock::sleeps() const {
    std::lock_guard lock(mu_);
    return sleeps_;
}

RateLimiter::RateLimiter(double rate_per_second, std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {
    if (rate_per_second > 0) {
        interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / rate_per_second));
    }
}

void RateLimiter::acquire() {
    if (interval_.count() == 0) return;
    std::lock_guard lock(mu_);
    auto now = clock_->now();
    if (has_last_ && now < last_ + interval_) {
        clock_->sleep_for(last_ + interval_ - now);
        now = clock_->now();
    }
    last_ = now;
    has_last_ = true;
}

std::pair<int, std::string> http_post(const std::string& url, const std::string& body, const std::string& bearer) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ValidationError("endpoint", "URL must include a scheme: " + url);
    if (url.compare(0, scheme, "http") != 0) {
        throw ValidationError("endpoint", "only http:// endpoints are supported (put a TLS proxy in front): " + url);
    }
    const auto slash = url.find('/', scheme + 3);
    const std::string base = url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : url.substr(slash);
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return {0, "transport error: " + httplib::to_string(res.error())};
    return {res->status, res->body};
}

HttpJsonClient::HttpJsonClient(std::string url, std::string bearer_token, RetryPolicy retry, double rate_limit,
                               std::shared_ptr<Clock> clock, Transport transport)
    : url_(std::move(url)), bearer_(std::move(bearer_token)), retry_(retry), clock_(std::move(clock)),
      limiter_(rate_limit, clock_), transport_(transport ? std::move(transport) : Transport(http_post)) {}

Json HttpJsonClient::post(const Json& body) {
    const std::string payload = body.dump();
    std::string last_error;
    auto delay = std::chrono::duration_cast<Clock::duration>(retry_.base_delay);
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        limiter_.acquire();
        auto [status, text] = transport_(url_, payload, bearer_);
        Json reply = Json::parse(text, nullptr, false);
        {
            std::lock_guard lock(log_mu_);
            log_.push_back({body, reply.is_discarded() ? Json(text) : reply, status, attempt});
        }
        if (status >= 200 && status < 300) {
            if (reply.is_discarded() || !reply.is_object()) throw AdapterError(url_ + ": reply is not a JSON object");
            return reply;
        }
        last_error = status == 0 ? text : "HTTP " + std::to_string(status);
        // Client errors will not improve on retry.
        if (status >= 400 && status < 500 && status != 429) break;
        if (attempt < retry_.max_attempts) {
            clock_->sleep_for(delay);
            delay = std::chrono::duration_cast<Clock::duration>(delay * retry_.multiplier);
        }
    }
    throw AdapterError(url_ + ": request failed (" + last_error + ")");
}

std::vector<Exchange> HttpJsonClient::log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

std::shared_ptr<HttpJsonClient> make_client(const AdapterConfig& config, std::shared_ptr<Clock> clock) {
    std::string token;
    if (!config.credentials_env.empty()) {
        const char* v = std::getenv(config.credentials_env.c_str());
        if (!v) throw ValidationError("credentials_env", "environment variable " + config.credentials_env + " is not set");
        token = v;
    }
    RetryPolicy retry;
    retry.max_attempts = config.max_attempts;
    if (config.options.contains("base_delay_ms")) {
        retry.base_delay = std::chrono::milliseconds(config.options.at("base_delay_ms").get<int>());
    }
    if (!clock) clock = std::make_shared<SteadyClock>();
    return std::make_shared<HttpJsonClient>(config.endpoint, std::move(token), retry, config.rate_limit, std::move(clock));
}

namespace {

Json images_payload(std::span<const Image> images) {
    Json arr = Json::array();
    for (const auto& im : images) arr.push_back(httplib::detail::base64_encode(encode_png(im)));
    return arr;
}

template <typename T>
T reply_field(const Json& reply, const char* key) {
    if (!reply.contains(key)) throw AdapterError(std::string("endpoint reply lacks '") + key + "'");
    try {
        return reply.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw AdapterError(std::string("endpoint reply field '") + key + "': " + e.what());
    }
}

} // namespace

std::string EndpointTextLlm::version() const {
    std::lock_guard lock(mu_);
    return version_;
}

std::string EndpointTextLlm::complete(const std::string& prompt, std::uint64_t seed) {
    const Json reply = client_->post({{"kind", "text_llm"}, {"prompt", prompt}, {"seed", seed}});
    if (reply.contains("version") && reply.at("version").is_string()) {
        std::lock_guard lock(mu_);
        version_ = reply.at("version").get<std::string>();
    }
    return reply_field<std::string>(reply, "text");
}

std::string EndpointCaptioner::caption(std::span<const Image> frames, std::uint64_t seed) {
    const Json reply = client_->post({{"kind", "captioner"}, {"seed", seed}, {"images", images_payload(frames)}});
    return reply_field<std::string>(reply, "text");
}

std::string EndpointJudge::judge(std::span<const Image> images, const std::string& prompt, std::uint64_t seed) {
    const Json reply =
        client_->post({{"kind", "judge"}, {"prompt", prompt}, {"seed", seed}, {"images", images_payload(images)}});
    return reply_field<std::string>(reply, "text");
}

Eigen::VectorXd EndpointImageEncoder::encode(const Image& image) {
    const Json reply = client_->post({{"kind", "image_encoder"}, {"images", images_payload({&image, 1})}});
    const auto v = reply_field<std::vector<double>>(reply, "features");
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double EndpointClip::score(const Image& image, const std::string& text) {
    const Json reply = client_->post({{"kind", "metric_clip"}, {"prompt", text}, {"images", images_payload({&image, 1})}});
    return reply_field<double>(reply, "value");
}

double EndpointLpips::distance(const Image& a, const Image& b) {
    const Image pair[2] = {a, b};
    const Json reply = client_->post({{"kind", "metric_lpips"}, {"images", images_payload(pair)}});
    return reply_field<double>(reply, "value");
}

} // namespace forge
