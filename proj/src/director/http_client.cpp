#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "framewise/chat_client.hpp"

namespace framewise::director {
namespace {

bool transient_status(int status) { return status == 429 || status >= 500; }

} // namespace

HttpChatClient::HttpChatClient(DirectorConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::string &url = config_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("chat endpoint must be an http:// or https:// URL: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw std::invalid_argument("chat endpoint must use http or https: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    base_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpChatClient::request_body(const std::string &model,
                                         const std::vector<ChatMessage> &messages) {
    nlohmann::json body;
    body["model"] = model;
    body["messages"] = nlohmann::json::array();
    for (const auto &m : messages)
        body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return body.dump();
}

std::string HttpChatClient::parse_response(const std::string &body) {
    try {
        const auto j = nlohmann::json::parse(body);
        const auto &content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string())
            throw MalformedResponseError("chat response content is not a string");
        return content.get<std::string>();
    } catch (const nlohmann::json::exception &e) {
        throw MalformedResponseError(std::string("malformed chat response: ") + e.what());
    }
}

std::string HttpChatClient::attempt(const std::string &body) {
    httplib::Client client(base_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (const char *key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0')
        headers.emplace("Authorization", std::string("Bearer ") + key);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        // A read that gives up after the full timeout is a timeout, not a dropped connection.
        if (err == httplib::Error::ConnectionTimeout ||
            (err == httplib::Error::Read && elapsed >= 0.9 * config_.timeout_seconds))
            throw TimeoutError("chat request timed out after " + std::to_string(elapsed) + " s");
        throw ConnectionError("chat request failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
        throw HttpStatusError(res->status, res->body);
    return parse_response(res->body);
}

std::string HttpChatClient::complete(const std::vector<ChatMessage> &messages) {
    if (messages.empty())
        throw std::invalid_argument("chat: conversation is empty");
    const std::string body = request_body(config_.model, messages);
    const int attempts = config_.max_retries + 1;
    for (int i = 0;; ++i) {
        RetryExhaustedError::Cause cause;
        std::string message;
        try {
            return attempt(body);
        } catch (const TimeoutError &e) {
            if (config_.max_retries == 0)
                throw;
            cause = RetryExhaustedError::Cause::timeout;
            message = e.what();
        } catch (const ConnectionError &e) {
            if (config_.max_retries == 0)
                throw;
            cause = RetryExhaustedError::Cause::connection;
            message = e.what();
        } catch (const HttpStatusError &e) {
            if (!transient_status(e.status()) || config_.max_retries == 0)
                throw;
            cause = RetryExhaustedError::Cause::status;
            message = e.what();
        }
        if (i + 1 >= attempts)
            throw RetryExhaustedError(attempts, cause, message);
        std::this_thread::sleep_for(config_.backoff * (1LL << std::min(i, 16)));
    }
}

} // namespace framewise::director
