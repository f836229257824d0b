#include <cmath>
#include <regex>
#include <sstream>

#include "framewise/chat_client.hpp"
#include "framewise/director.hpp"

namespace framewise::director {
namespace {

std::string collapse_whitespace(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::string out;
    for (std::string word; in >> word;) {
        if (!out.empty())
            out += ' ';
        out += word;
    }
    return out;
}

std::string_view story_phase(int k, int frames) {
    if (frames == 1)
        return "the whole story in a single shot";
    const double pos = static_cast<double>(k - 1) / static_cast<double>(frames - 1);
    if (pos < 0.25)
        return "establishing shot, wide angle";
    if (pos < 0.5)
        return "the action develops, medium shot";
    if (pos < 0.75)
        return "the story builds, tracking camera";
    return "the scene resolves, steady close-up";
}

const ChatMessage *last_with_role(const std::vector<ChatMessage> &messages, Role role) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == role)
            return &*it;
    return nullptr;
}

std::string mock_task_reply(const std::string &instruction, int frames) {
    std::string prompt;
    const auto start = instruction.find("User prompt: ");
    const auto end = instruction.find("\n\nRequirements:");
    if (start != std::string::npos && end != std::string::npos && end > start)
        prompt = collapse_whitespace(instruction.substr(start + 13, end - start - 13));
    if (prompt.empty())
        prompt = "an unspecified scene";
    std::ostringstream out;
    for (int k = 1; k <= frames; ++k) {
        if (k > 1)
            out << '\n';
        out << "Frame " << k << ": " << prompt << ", " << story_phase(k, frames) << ", frame " << k
            << " of " << frames << ".";
    }
    return out.str();
}

std::string mock_lift_reply(const std::vector<ChatMessage> &messages, int target_frames) {
    const ChatMessage *previous = last_with_role(messages, Role::assistant);
    if (previous == nullptr || target_frames % 2 != 0)
        throw MalformedResponseError("mock: nothing to divide");
    const FramePromptSet before = parse_frame_prompts(previous->content, target_frames / 2);
    std::ostringstream out;
    for (std::size_t i = 0; i < before.prompts.size(); ++i) {
        std::string base = before.prompts[i];
        if (!base.empty() && base.back() == '.')
            base.pop_back();
        if (i > 0)
            out << '\n';
        out << "Frame " << 2 * i + 1 << ": " << base << " (first half).\n"
            << "Frame " << 2 * i + 2 << ": " << base << " (second half).";
    }
    return out.str();
}

} // namespace

std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

void DirectorConfig::validate() const {
    if (frames < 1)
        throw std::invalid_argument("director: frame count must be >= 1");
    if (fps < 1)
        throw std::invalid_argument("director: fps must be >= 1");
    if (!(timeout_seconds > 0.0) || !std::isfinite(timeout_seconds))
        throw std::invalid_argument("director: timeout must be > 0");
    if (max_retries < 0)
        throw std::invalid_argument("director: max retries must be >= 0");
    if (backoff.count() < 0)
        throw std::invalid_argument("director: backoff must be >= 0");
}

HttpStatusError::HttpStatusError(int status, const std::string &body)
    : ChatError("chat endpoint returned HTTP " + std::to_string(status) +
                (body.empty() ? std::string() : ": " + body.substr(0, 200))),
      status_(status) {}

RetryExhaustedError::RetryExhaustedError(int attempts, Cause last_cause,
                                         const std::string &last_message)
    : ChatError("chat request failed after " + std::to_string(attempts) +
                " attempts; last error: " + last_message),
      attempts_(attempts), last_cause_(last_cause) {}

std::string MockChatClient::complete(const std::vector<ChatMessage> &messages) {
    if (messages.empty())
        throw std::invalid_argument("chat: conversation is empty");
    const ChatMessage *user = last_with_role(messages, Role::user);
    if (user == nullptr)
        throw std::invalid_argument("chat: no user message");

    static const std::regex lift(R"(frame rate of (\d+) fps.*result in (\d+) frames)");
    static const std::regex task(R"(Write exactly (\d+) image description)");
    std::smatch m;
    if (std::regex_search(user->content, m, lift))
        return mock_lift_reply(messages, std::stoi(m[2].str()));
    if (std::regex_search(user->content, m, task))
        return mock_task_reply(user->content, std::stoi(m[1].str()));
    return "I can only help with frame-by-frame video directions.";
}

std::unique_ptr<ChatClient> make_client(const DirectorConfig &config, bool mock) {
    if (mock)
        return std::make_unique<MockChatClient>();
    return std::make_unique<HttpChatClient>(config);
}

} // namespace framewise::director
