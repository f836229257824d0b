#pragma once

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace framewise::director {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage &) const = default;
};

struct DirectorConfig {
    int frames = 8;
    int fps = 4;
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4";
    double timeout_seconds = 60.0;
    int max_retries = 3;
    std::chrono::milliseconds backoff{500}; // doubled after every failed attempt
    std::string api_key_env = "FRAMEWISE_API_KEY";

    void validate() const;
};

/// Base of every chat-completion failure.
class ChatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimeoutError : public ChatError {
public:
    using ChatError::ChatError;
};

/// Connection refused or dropped before a response arrived.
class ConnectionError : public ChatError {
public:
    using ChatError::ChatError;
};

class HttpStatusError : public ChatError {
public:
    HttpStatusError(int status, const std::string &body);
    int status() const { return status_; }

private:
    int status_;
};

class MalformedResponseError : public ChatError {
public:
    using ChatError::ChatError;
};

/// Every attempt failed with a transient error.
class RetryExhaustedError : public ChatError {
public:
    enum class Cause { timeout, connection, status };
    RetryExhaustedError(int attempts, Cause last_cause, const std::string &last_message);
    int attempts() const { return attempts_; }
    Cause last_cause() const { return last_cause_; }

private:
    int attempts_;
    Cause last_cause_;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// Returns the assistant reply to the conversation or throws ChatError.
    virtual std::string complete(const std::vector<ChatMessage> &messages) = 0;
};

/// Deterministic stand-in for a chat model. A task instruction yields the
/// requested number of "Frame k:" lines built from the user prompt; a lift
/// instruction splits every frame of the previous assistant reply into an
/// early and a late half.
class MockChatClient : public ChatClient {
public:
    std::string complete(const std::vector<ChatMessage> &messages) override;
};

/// OpenAI-style chat-completion client: POSTs {model, messages} and returns
/// choices[0].message.content. Transient failures (timeouts, dropped
/// connections, 429 and 5xx) are retried with exponential backoff.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(DirectorConfig config);
    std::string complete(const std::vector<ChatMessage> &messages) override;

    /// Request body for the given conversation.
    static std::string request_body(const std::string &model,
                                    const std::vector<ChatMessage> &messages);
    /// Extracts choices[0].message.content; throws MalformedResponseError.
    static std::string parse_response(const std::string &body);

private:
    std::string attempt(const std::string &body);

    DirectorConfig config_;
    std::string base_;
    std::string path_;
};

std::unique_ptr<ChatClient> make_client(const DirectorConfig &config, bool mock);

} // namespace framewise::director
