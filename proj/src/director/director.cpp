#include "framewise/director.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace framewise::director {
namespace {

std::string plural(int n, std::string_view word) {
    std::string out = std::to_string(n) + " " + std::string(word);
    if (n != 1)
        out += "s";
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

const std::regex &frame_line_pattern() {
    // Optional list marker ("-", "*", "+", bullet, "3." or "3)"), optional
    // markdown bold, "Frame <k>" then ":" or "-" before the description.
    static const std::regex re(
        R"(^\s*(?:(?:[-*+]|•|\d+[.)])\s*)?(?:\*\*|__)?frame\s*#?\s*(\d+)\s*(?:\*\*|__)?\s*[:\-]\s*(?:\*\*|__)?(.*)$)",
        std::regex::ECMAScript | std::regex::icase);
    return re;
}

} // namespace

void FramePromptSet::validate() const {
    if (prompts.empty())
        throw std::invalid_argument("FramePromptSet: at least one prompt is required");
    if (fps < 1)
        throw std::invalid_argument("FramePromptSet: fps must be >= 1");
    for (std::size_t i = 0; i < prompts.size(); ++i)
        if (trim(prompts[i]).empty())
            throw std::invalid_argument("FramePromptSet: prompt " + std::to_string(i + 1) +
                                        " is empty");
}

std::string to_json(const FramePromptSet &set) {
    nlohmann::json j;
    j["user_prompt"] = set.user_prompt;
    j["fps"] = set.fps;
    j["prompts"] = set.prompts;
    return j.dump(2);
}

FramePromptSet frame_prompts_from_json(std::string_view text) {
    FramePromptSet set;
    try {
        const auto j = nlohmann::json::parse(text);
        set.user_prompt = j.value("user_prompt", std::string{});
        set.fps = j.at("fps").get<int>();
        set.prompts = j.at("prompts").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception &e) {
        throw std::invalid_argument(std::string("frame prompt JSON: ") + e.what());
    }
    set.validate();
    return set;
}

ParseError::ParseError(Kind kind, std::string message, std::size_t found, std::size_t expected)
    : std::runtime_error(std::move(message)), kind_(kind), found_(found), expected_(expected) {}

ParseError ParseError::at_iteration(int iteration) const {
    ParseError copy(kind_, "fps lift iteration " + std::to_string(iteration) + ": " + what(),
                    found_, expected_);
    copy.iteration_ = iteration;
    return copy;
}

std::string build_task_instruction(std::string_view user_prompt, int frames, int fps,
                                   const std::vector<std::string> &extra_lines) {
    if (trim(user_prompt).empty())
        throw std::invalid_argument("build_task_instruction: user prompt is empty");
    if (frames < 1 || fps < 1)
        throw std::invalid_argument("build_task_instruction: frames and fps must be >= 1");

    std::ostringstream out;
    out << "You are a film director planning a short video frame by frame.\n"
        << "Turn the user prompt below into a sequence of image descriptions, one per frame, "
           "that together tell its story.\n\n"
        << "User prompt: " << user_prompt << "\n\n"
        << "Requirements:\n"
        << "- Write exactly " << plural(frames, "image description") << ", one for each frame of a "
        << frames << "-frame video at " << fps << " fps.\n"
        << "- Keep the narrative continuous: the plot or storyline unfolds in order across the "
           "frames.\n"
        << "- Describe the actions taking place in each frame.\n"
        << "- Describe objects and characters consistently (appearance, colour, count).\n"
        << "- Include contextual information such as setting, weather, time of day and lighting.\n"
        << "- State the camera angle and any camera movement.\n"
        << "- Every description must stand alone as a prompt for a text-to-image model.\n";
    for (const auto &line : extra_lines)
        if (!trim(line).empty())
            out << "- " << trim(line) << "\n";
    out << "\nOutput format: exactly " << plural(frames, "line") << ", numbered from 1 to "
        << frames << ", each of the form\n"
        << "Frame k: <description>\n"
        << "Do not write anything else.";
    return out.str();
}

FramePromptSet parse_frame_prompts(std::string_view llm_text, int expected_frames, int fps,
                                   std::string user_prompt) {
    if (expected_frames < 1)
        throw std::invalid_argument("parse_frame_prompts: expected frame count must be >= 1");

    std::map<long, std::string> found;
    std::istringstream in{std::string(llm_text)};
    for (std::string line; std::getline(in, line);) {
        std::smatch m;
        if (!std::regex_match(line, m, frame_line_pattern()))
            continue;
        const long k = std::stol(m[1].str());
        std::string text = trim(m[2].str());
        for (std::string_view bold : {"**", "__"})
            if (text.size() >= bold.size() && text.ends_with(bold))
                text = trim(std::string_view(text).substr(0, text.size() - bold.size()));
        if (text.empty())
            throw ParseError(ParseError::Kind::format,
                             "frame " + std::to_string(k) + " has an empty description");
        if (!found.emplace(k, std::move(text)).second)
            throw ParseError(ParseError::Kind::duplicate_frame,
                             "frame " + std::to_string(k) + " appears more than once");
    }
    if (found.empty())
        throw ParseError(ParseError::Kind::format, "no \"Frame k: <description>\" lines found", 0,
                         static_cast<std::size_t>(expected_frames));
    if (found.size() != static_cast<std::size_t>(expected_frames))
        throw ParseError(ParseError::Kind::count_mismatch,
                         "found " + std::to_string(found.size()) + " frame prompts, expected " +
                             std::to_string(expected_frames),
                         found.size(), static_cast<std::size_t>(expected_frames));

    FramePromptSet set;
    set.user_prompt = std::move(user_prompt);
    set.fps = fps;
    long next = 1;
    for (auto &[k, text] : found) {
        if (k != next)
            throw ParseError(ParseError::Kind::format,
                             "frame numbers must run from 1 to " + std::to_string(expected_frames) +
                                 " without gaps (saw " + std::to_string(k) + ")",
                             found.size(), static_cast<std::size_t>(expected_frames));
        set.prompts.push_back(std::move(text));
        ++next;
    }
    return set;
}

std::string build_fps_lift_instruction(int fps, int frames) {
    if (fps < 1 || frames < 1)
        throw std::invalid_argument("build_fps_lift_instruction: fps and frames must be >= 1");
    return "Now, at a frame rate of " + std::to_string(2 * fps) +
           " fps, divide each frame in the previous result into two separate image descriptions. "
           "This should eventually result in " +
           std::to_string(2 * frames) + " frames.";
}

std::string format_frame_lines(const FramePromptSet &set) {
    std::string out;
    for (std::size_t i = 0; i < set.prompts.size(); ++i) {
        if (i > 0)
            out += "\n";
        out += "Frame " + std::to_string(i + 1) + ": " + set.prompts[i];
    }
    return out;
}

DirectResult direct(std::string_view user_prompt, int frames, int fps, ChatClient &client,
                    const std::vector<std::string> &extra_lines) {
    DirectResult result;
    result.conversation.push_back(
        {Role::user, build_task_instruction(user_prompt, frames, fps, extra_lines)});
    const std::string reply = client.complete(result.conversation);
    result.conversation.push_back({Role::assistant, reply});
    result.prompts = parse_frame_prompts(reply, frames, fps, std::string(user_prompt));
    return result;
}

FramePromptSet lift_fps(const FramePromptSet &set, int iterations, ChatClient &client,
                        Conversation &conversation) {
    if (iterations < 0)
        throw std::invalid_argument("lift_fps: iterations must be >= 0");
    set.validate();
    FramePromptSet current = set;
    for (int it = 1; it <= iterations; ++it) {
        const int frames = static_cast<int>(current.frame_count());
        conversation.push_back({Role::user, build_fps_lift_instruction(current.fps, frames)});
        const std::string reply = client.complete(conversation);
        conversation.push_back({Role::assistant, reply});
        try {
            current = parse_frame_prompts(reply, 2 * frames, 2 * current.fps, current.user_prompt);
        } catch (const ParseError &e) {
            throw e.at_iteration(it);
        }
    }
    return current;
}

FramePromptSet lift_fps(const FramePromptSet &set, int iterations, ChatClient &client) {
    set.validate();
    Conversation conversation;
    const std::string user_prompt =
        set.user_prompt.empty() ? format_frame_lines(set) : set.user_prompt;
    conversation.push_back({Role::user, build_task_instruction(user_prompt,
                                                               static_cast<int>(set.frame_count()),
                                                               set.fps)});
    conversation.push_back({Role::assistant, format_frame_lines(set)});
    return lift_fps(set, iterations, client, conversation);
}

} // namespace framewise::director
