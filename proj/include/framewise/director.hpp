#pragma once

// Frame-level directing: the task instruction sent to an instruction-tuned
// chat model, the parser for its numbered per-frame reply, and frame-rate
// lifting by repeatedly asking the model to split every frame in two.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "framewise/chat_client.hpp"

namespace framewise::director {

struct FramePromptSet {
    std::string user_prompt;
    int fps = 1;
    std::vector<std::string> prompts;

    std::size_t frame_count() const { return prompts.size(); }
    void validate() const;
    bool operator==(const FramePromptSet &) const = default;
};

std::string to_json(const FramePromptSet &set);
/// Throws std::invalid_argument on malformed JSON or a set that fails validation.
FramePromptSet frame_prompts_from_json(std::string_view text);

class ParseError : public std::runtime_error {
public:
    enum class Kind { count_mismatch, duplicate_frame, format };

    ParseError(Kind kind, std::string message, std::size_t found = 0, std::size_t expected = 0);

    Kind kind() const { return kind_; }
    std::size_t found() const { return found_; }
    std::size_t expected() const { return expected_; }
    /// Set when the error surfaced during the given (1-based) lifting iteration.
    std::optional<int> iteration() const { return iteration_; }
    ParseError at_iteration(int iteration) const;

private:
    Kind kind_;
    std::size_t found_;
    std::size_t expected_;
    std::optional<int> iteration_;
};

/// Task instruction asking for exactly `frames` numbered descriptions at
/// `fps`. `extra_lines` carries free-form attribute controls (camera, style).
std::string build_task_instruction(std::string_view user_prompt, int frames, int fps,
                                   const std::vector<std::string> &extra_lines = {});

/// Extracts "Frame <k>: <text>" lines (case-insensitive, optional list
/// markers) ordered by k. The indices must be exactly 1..expected_frames.
FramePromptSet parse_frame_prompts(std::string_view llm_text, int expected_frames, int fps = 1,
                                   std::string user_prompt = {});

std::string build_fps_lift_instruction(int fps, int frames);

/// The running conversation; lifting appends to it.
using Conversation = std::vector<ChatMessage>;

/// Assistant-style rendering of a prompt set ("Frame k: ..." per line).
std::string format_frame_lines(const FramePromptSet &set);

struct DirectResult {
    FramePromptSet prompts;
    Conversation conversation;
};

/// One director round trip: instruction, reply, parse.
DirectResult direct(std::string_view user_prompt, int frames, int fps, ChatClient &client,
                    const std::vector<std::string> &extra_lines = {});

/// Each iteration asks the model to split every frame in two, doubling the
/// frame count and fps. Parse errors carry the iteration index.
FramePromptSet lift_fps(const FramePromptSet &set, int iterations, ChatClient &client,
                        Conversation &conversation);
/// Rebuilds the conversation from the set itself when none was kept.
FramePromptSet lift_fps(const FramePromptSet &set, int iterations, ChatClient &client);

} // namespace framewise::director
