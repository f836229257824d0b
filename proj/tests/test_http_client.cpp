#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "framewise/chat_client.hpp"

using namespace framewise::director;

namespace {

std::string reply_json(const std::string &content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Local chat endpoint with scripted failure modes.
class StubServer {
public:
    StubServer() {
        server_.Post("/flaky", [this](const httplib::Request &, httplib::Response &res) {
            if (flaky_calls++ == 0) {
                res.status = 500;
                res.set_content("overloaded", "text/plain");
                return;
            }
            res.set_content(reply_json("Frame 1: ok"), "application/json");
        });
        server_.Post("/down", [this](const httplib::Request &, httplib::Response &res) {
            ++down_calls;
            res.status = 503;
        });
        server_.Post("/malformed", [this](const httplib::Request &, httplib::Response &res) {
            ++malformed_calls;
            res.set_content("{\"choices\": [", "application/json");
        });
        server_.Post("/no-content", [](const httplib::Request &, httplib::Response &res) {
            res.set_content(R"({"choices": [{"message": {"role": "assistant"}}]})", "application/json");
        });
        server_.Post("/slow", [this](const httplib::Request &, httplib::Response &res) {
            ++slow_calls;
            std::this_thread::sleep_for(std::chrono::milliseconds(1200));
            res.set_content(reply_json("late"), "application/json");
        });
        server_.Post("/bad-request", [this](const httplib::Request &, httplib::Response &res) {
            ++bad_request_calls;
            res.status = 400;
        });
        server_.Post("/echo", [this](const httplib::Request &req, httplib::Response &res) {
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            res.set_content(reply_json("echo"), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    DirectorConfig config(const std::string &path, int retries, double timeout = 5.0) const {
        DirectorConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + path;
        c.max_retries = retries;
        c.backoff = std::chrono::milliseconds(10);
        c.timeout_seconds = timeout;
        c.api_key_env = "FRAMEWISE_TEST_KEY";
        return c;
    }

    std::atomic<int> flaky_calls{0};
    std::atomic<int> down_calls{0};
    std::atomic<int> malformed_calls{0};
    std::atomic<int> slow_calls{0};
    std::atomic<int> bad_request_calls{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

const std::vector<ChatMessage> kConversation = {{Role::user, "hello"}};

} // namespace

TEST_CASE("retry on 500 then succeed") {
    StubServer stub;
    HttpChatClient client(stub.config("/flaky", 2));
    CHECK(client.complete(kConversation) == "Frame 1: ok");
    CHECK(stub.flaky_calls == 2);
}

TEST_CASE("persistent 503 exhausts retries") {
    StubServer stub;
    HttpChatClient client(stub.config("/down", 2));
    try {
        client.complete(kConversation);
        FAIL("no error");
    } catch (const RetryExhaustedError &e) {
        CHECK(e.attempts() == 3);
        CHECK(e.last_cause() == RetryExhaustedError::Cause::status);
    }
    CHECK(stub.down_calls == 3);

    HttpChatClient no_retry(stub.config("/down", 0));
    try {
        no_retry.complete(kConversation);
        FAIL("no error");
    } catch (const HttpStatusError &e) {
        CHECK(e.status() == 503);
    }
}

TEST_CASE("malformed body fails without retry") {
    StubServer stub;
    HttpChatClient client(stub.config("/malformed", 3));
    CHECK_THROWS_AS(client.complete(kConversation), MalformedResponseError);
    CHECK(stub.malformed_calls == 1);
    HttpChatClient missing(stub.config("/no-content", 3));
    CHECK_THROWS_AS(missing.complete(kConversation), MalformedResponseError);
}

TEST_CASE("client errors are not retried") {
    StubServer stub;
    HttpChatClient client(stub.config("/bad-request", 3));
    try {
        client.complete(kConversation);
        FAIL("no error");
    } catch (const HttpStatusError &e) {
        CHECK(e.status() == 400);
    }
    CHECK(stub.bad_request_calls == 1);
}

TEST_CASE("slow server is classified as a timeout") {
    StubServer stub;
    HttpChatClient client(stub.config("/slow", 0, 0.3));
    CHECK_THROWS_AS(client.complete(kConversation), TimeoutError);

    HttpChatClient retrying(stub.config("/slow", 1, 0.3));
    try {
        retrying.complete(kConversation);
        FAIL("no error");
    } catch (const RetryExhaustedError &e) {
        CHECK(e.last_cause() == RetryExhaustedError::Cause::timeout);
        CHECK(e.attempts() == 2);
    }
}

TEST_CASE("refused connection") {
    DirectorConfig c;
    {
        StubServer stub;
        c = stub.config("/echo", 0);
    }
    HttpChatClient client(c);
    CHECK_THROWS_AS(client.complete(kConversation), ConnectionError);
}

TEST_CASE("request body and auth header") {
    StubServer stub;
    ::setenv("FRAMEWISE_TEST_KEY", "sk-test", 1);
    auto config = stub.config("/echo", 0);
    config.model = "test-model";
    HttpChatClient client(config);
    CHECK(client.complete({{Role::system, "be brief"}, {Role::user, "hi"}}) == "echo");
    const auto body = nlohmann::json::parse(stub.last_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "hi");
    CHECK(stub.last_auth == "Bearer sk-test");
    ::unsetenv("FRAMEWISE_TEST_KEY");
}

TEST_CASE("endpoint validation") {
    DirectorConfig c;
    c.endpoint = "ftp://example.com/x";
    CHECK_THROWS_AS(HttpChatClient{c}, std::invalid_argument);
    c.endpoint = "localhost:8080";
    CHECK_THROWS_AS(HttpChatClient{c}, std::invalid_argument);
    CHECK_THROWS_AS(HttpChatClient::parse_response("[]"), MalformedResponseError);
    CHECK(HttpChatClient::parse_response(reply_json("x")) == "x");
}
