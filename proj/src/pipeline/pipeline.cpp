#include "framewise/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace framewise::pipeline {
namespace {

using diffusion::Branch;

// Feeds the sampler the first section's cached keys/values as a context
// prefix, and records them while the first section is sampled.
class SectionContext : public diffusion::SelfAttentionContext {
public:
    SectionContext(AttentionCache &cache, std::vector<int> section, std::vector<int> cached, bool record)
        : cache_(cache), section_(std::move(section)), cached_(std::move(cached)), record_(record) {}

    void set_position(int step, Branch branch) override {
        step_ = step;
        branch_ = branch;
    }

    std::vector<attention::FrameKV> prefix(int layer, std::span<const Matrix> keys,
                                           std::span<const Matrix> values) override {
        if (record_)
            for (std::size_t i = 0; i < section_.size(); ++i)
                cache_.put({branch_, step_, layer, section_[i]}, keys[i], values[i]);
        std::vector<attention::FrameKV> out;
        out.reserve(cached_.size());
        for (int frame : cached_) {
            const auto &entry = cache_.get({branch_, step_, layer, frame});
            out.push_back({&entry.keys, &entry.values});
        }
        return out;
    }

private:
    AttentionCache &cache_;
    std::vector<int> section_;
    std::vector<int> cached_;
    bool record_;
    int step_ = 0;
    Branch branch_ = Branch::unconditional;
};

} // namespace

void PipelineConfig::validate() const {
    if (batch < 2)
        throw std::invalid_argument("pipeline: batch size must be >= 2");
    if (frames < 1)
        throw std::invalid_argument("pipeline: frame count must be >= 1");
    if (fps < 1)
        throw std::invalid_argument("pipeline: fps must be >= 1");
    if (channels < 1)
        throw std::invalid_argument("pipeline: channels must be >= 1");
    sampler().validate();
    if (motion) {
        const long reach_x = static_cast<long>(frames - 1) * motion->dx;
        const long reach_y = static_cast<long>(frames - 1) * motion->dy;
        if (std::labs(reach_x) >= width || std::labs(reach_y) >= height)
            throw std::invalid_argument("pipeline: motion moves the last frame off the latent grid");
    }
}

attention::CrossFrameConfig PipelineConfig::attention() const {
    return {mode, period, quantile, scale_dual_softmax};
}

diffusion::SamplerConfig PipelineConfig::sampler() const {
    diffusion::SamplerConfig s;
    s.steps = steps;
    s.mapping_steps = mapping_steps;
    s.guidance = guidance;
    s.attention = attention();
    s.seed = seed;
    s.height = height;
    s.width = width;
    s.motion = motion;
    return s;
}

std::vector<std::vector<int>> plan_sections(int frames, int batch) {
    if (batch < 2)
        throw std::invalid_argument("plan_sections: batch size must be >= 2");
    if (frames < 1)
        throw std::invalid_argument("plan_sections: frame count must be >= 1");
    std::vector<std::vector<int>> sections;
    auto take = [&](int first, int count) {
        std::vector<int> s;
        for (int f = first; f < first + count && f <= frames; ++f)
            s.push_back(f);
        sections.push_back(std::move(s));
        return first + count;
    };
    if (frames <= batch) {
        take(1, frames);
        return sections;
    }
    const int cached = batch / 2;
    const int fresh = batch - cached;
    int next = take(1, cached);
    while (next <= frames)
        next = take(next, fresh);
    return sections;
}

void AttentionCache::put(const Key &key, Matrix keys, Matrix values) {
    const auto [it, inserted] = entries_.try_emplace(key, Entry{std::move(keys), std::move(values)});
    if (!inserted)
        throw std::logic_error("AttentionCache: entry for frame " + std::to_string(key.frame) +
                               " written twice");
}

const AttentionCache::Entry &AttentionCache::get(const Key &key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end())
        throw std::logic_error("AttentionCache: frame " + std::to_string(key.frame) +
                               " read before it was generated");
    ++reads_;
    return it->second;
}

GeneratedVideo generate_video(const director::FramePromptSet &prompts, const PipelineConfig &config,
                              AttentionCache *cache) {
    config.validate();
    prompts.validate();
    if (static_cast<int>(prompts.frame_count()) != config.frames)
        throw std::invalid_argument("generate_video: prompt set has " +
                                    std::to_string(prompts.frame_count()) + " frames, config expects " +
                                    std::to_string(config.frames));

    const auto schedule = diffusion::NoiseSchedule::linear(config.steps);
    const auto params = diffusion::DenoiserParams::from_seed(
        config.seed, diffusion::DenoiserShape{.channels = config.channels});

    GeneratedVideo out;
    out.prompts = prompts;
    out.sections = plan_sections(config.frames, config.batch);
    out.latents.height = config.height;
    out.latents.width = config.width;
    out.latents.channels = config.channels;

    AttentionCache local_cache;
    AttentionCache &store = cache != nullptr ? *cache : local_cache;
    const bool sectioned = out.sections.size() > 1;
    const std::vector<int> &first_section = out.sections.front();

    for (std::size_t s = 0; s < out.sections.size(); ++s) {
        const auto &section = out.sections[s];
        std::vector<std::string> section_prompts;
        for (int f : section)
            section_prompts.push_back(prompts.prompts[static_cast<std::size_t>(f - 1)]);

        auto sampler = config.sampler();
        sampler.first_frame_index = section.front();
        std::optional<SectionContext> context;
        if (sectioned)
            context.emplace(store, section, s == 0 ? std::vector<int>{} : first_section, s == 0);
        auto latents = diffusion::denoise_video(section_prompts, schedule, params, sampler,
                                                context ? &*context : nullptr);
        for (auto &frame : latents.frames)
            out.latents.frames.push_back(std::move(frame));
        out.latents.timestep = latents.timestep;
    }

    out.frames = render_video(out.latents, LatentDecoder::seeded(config.channels));
    return out;
}

GeneratedVideo generate_video(std::string_view user_prompt, const PipelineConfig &config,
                              director::ChatClient &client) {
    config.validate();
    const auto directed = director::direct(user_prompt, config.frames, config.fps, client);
    return generate_video(directed.prompts, config);
}

std::string to_json(const PipelineConfig &c) {
    nlohmann::ordered_json j;
    j["steps"] = c.steps;
    j["mapping_steps"] = c.mapping_steps;
    j["guidance"] = c.guidance;
    j["period"] = c.period;
    j["mode"] = std::string(attention::to_string(c.mode));
    j["quantile"] = c.quantile;
    j["scale_dual_softmax"] = c.scale_dual_softmax;
    j["frames"] = c.frames;
    j["fps"] = c.fps;
    j["batch"] = c.batch;
    j["seed"] = c.seed;
    j["motion_dx"] = c.motion ? c.motion->dx : 0;
    j["motion_dy"] = c.motion ? c.motion->dy : 0;
    j["height"] = c.height;
    j["width"] = c.width;
    j["channels"] = c.channels;
    return j.dump(2);
}

PipelineConfig pipeline_config_from_json(std::string_view text) {
    PipelineConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object())
            throw std::invalid_argument("pipeline config JSON must be an object");
        static const std::set<std::string> known = {
            "steps", "mapping_steps", "guidance", "period", "mode", "quantile",
            "scale_dual_softmax", "frames", "fps", "batch", "seed", "motion_dx", "motion_dy",
            "height", "width", "channels"};
        for (const auto &[key, value] : j.items())
            if (!known.contains(key))
                throw std::invalid_argument("pipeline config: unknown key '" + key + "'");
        c.steps = j.value("steps", c.steps);
        c.mapping_steps = j.value("mapping_steps", c.mapping_steps);
        c.guidance = j.value("guidance", c.guidance);
        c.period = j.value("period", c.period);
        if (j.contains("mode"))
            c.mode = attention::parse_mode(j.at("mode").get<std::string>());
        c.quantile = j.value("quantile", c.quantile);
        c.scale_dual_softmax = j.value("scale_dual_softmax", c.scale_dual_softmax);
        c.frames = j.value("frames", c.frames);
        c.fps = j.value("fps", c.fps);
        c.batch = j.value("batch", c.batch);
        c.seed = j.value("seed", c.seed);
        const int dx = j.value("motion_dx", 0);
        const int dy = j.value("motion_dy", 0);
        if (dx != 0 || dy != 0)
            c.motion = diffusion::Motion{dx, dy};
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.channels = j.value("channels", c.channels);
    } catch (const nlohmann::json::exception &e) {
        throw std::invalid_argument(std::string("pipeline config JSON: ") + e.what());
    }
    c.validate();
    return c;
}

std::string manifest_json(const GeneratedVideo &video, const PipelineConfig &config) {
    nlohmann::ordered_json j;
    j["config"] = nlohmann::ordered_json::parse(to_json(config));
    j["seed"] = config.seed;
    j["prompts"] = nlohmann::ordered_json::parse(director::to_json(video.prompts));
    j["sections"] = video.sections;
    std::vector<std::string> pngs;
    for (std::size_t i = 0; i < video.frames.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(4) << std::setfill('0') << i + 1 << ".png";
        pngs.push_back(name.str());
    }
    j["files"] = {{"frames", pngs}, {"gif", "video.gif"}};
    j["gif_delay_cs"] = gif_delay_centiseconds(video.prompts.fps);
    return j.dump(2);
}

OutputPaths write_outputs(const GeneratedVideo &video, const PipelineConfig &config,
                          const std::filesystem::path &directory) {
    if (video.frames.empty())
        throw std::invalid_argument("write_outputs: no frames");
    for (const auto &f : video.frames)
        if (f.width != video.frames.front().width || f.height != video.frames.front().height)
            throw std::invalid_argument("write_outputs: frames differ in size");

    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec || !std::filesystem::is_directory(directory))
        throw std::runtime_error("cannot create output directory " + directory.string() +
                                 (ec ? ": " + ec.message() : std::string()));

    OutputPaths paths;
    for (std::size_t i = 0; i < video.frames.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(4) << std::setfill('0') << i + 1 << ".png";
        paths.pngs.push_back(directory / name.str());
        write_png(paths.pngs.back(), video.frames[i]);
    }
    paths.gif = directory / "video.gif";
    write_gif(paths.gif, video.frames, gif_delay_centiseconds(video.prompts.fps));
    paths.manifest = directory / "manifest.json";
    std::ofstream manifest(paths.manifest);
    manifest << manifest_json(video, config) << '\n';
    if (!manifest)
        throw std::runtime_error("cannot write " + paths.manifest.string());
    return paths;
}

} // namespace framewise::pipeline
