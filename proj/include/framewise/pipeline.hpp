#pragma once

// End-to-end generation: prompt set -> sectioned sampling with a cache of
// first-section keys/values -> rendered RGB frames -> PNG/GIF/manifest.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framewise/attention.hpp"
#include "framewise/diffusion.hpp"
#include "framewise/director.hpp"
#include "framewise/image_io.hpp"

namespace framewise::pipeline {

struct PipelineConfig {
    int steps = 100;          // T
    int mapping_steps = 96;   // T'
    double guidance = 12.0;
    int period = 4;           // m
    attention::Mode mode = attention::Mode::rvm_dsf;
    double quantile = 0.4;
    bool scale_dual_softmax = true;
    int frames = 8;           // F
    int fps = 4;              // R
    int batch = 8;            // B
    std::uint64_t seed = 0;
    std::optional<diffusion::Motion> motion;
    int height = 16;
    int width = 16;
    int channels = 4;

    void validate() const;
    diffusion::SamplerConfig sampler() const;
    attention::CrossFrameConfig attention() const;
};

/// Sections of 1-based frame indices. Everything fits in one section when
/// F <= B; otherwise the first section holds floor(B/2) frames and each later
/// one up to B - floor(B/2) new frames, sampled next to the first section's
/// cached frames.
std::vector<std::vector<int>> plan_sections(int frames, int batch);

/// Write-once store of self-attention keys/values keyed by branch, step,
/// layer and global frame index.
class AttentionCache {
public:
    struct Key {
        diffusion::Branch branch;
        int step;
        int layer;
        int frame;
        auto operator<=>(const Key &) const = default;
    };
    struct Entry {
        Matrix keys;
        Matrix values;
    };

    /// Throws std::logic_error if the key was already written.
    void put(const Key &key, Matrix keys, Matrix values);
    /// Throws std::logic_error if the key was never written.
    const Entry &get(const Key &key) const;
    bool contains(const Key &key) const { return entries_.contains(key); }
    std::size_t size() const { return entries_.size(); }
    std::size_t reads() const { return reads_; }
    std::size_t writes() const { return entries_.size(); }

private:
    std::map<Key, Entry> entries_;
    mutable std::size_t reads_ = 0;
};

/// Fixed linear map from latent channels to RGB.
struct LatentDecoder {
    Matrix projection; // channels x 3

    static LatentDecoder seeded(int channels, std::uint64_t seed = kDefaultSeed);
    static constexpr std::uint64_t kDefaultSeed = 0x5eedu;
};

/// Projects every frame to RGB and normalises the whole video to [0, 255]
/// with one shared min/max. A video whose pixels all hold the same latent
/// renders mid-gray.
std::vector<RgbImage> render_video(const diffusion::LatentVideo &video, const LatentDecoder &decoder);
/// A single frame rendered as a one-frame video.
RgbImage render_frame(const Matrix &z0, int height, int width, const LatentDecoder &decoder);

struct GeneratedVideo {
    director::FramePromptSet prompts;
    diffusion::LatentVideo latents;
    std::vector<RgbImage> frames;
    std::vector<std::vector<int>> sections;
};

GeneratedVideo generate_video(const director::FramePromptSet &prompts, const PipelineConfig &config,
                              AttentionCache *cache = nullptr);
/// Runs the director first.
GeneratedVideo generate_video(std::string_view user_prompt, const PipelineConfig &config,
                              director::ChatClient &client);

struct OutputPaths {
    std::vector<std::filesystem::path> pngs;
    std::filesystem::path gif;
    std::filesystem::path manifest;
};

/// frame_0001.png ..., video.gif at the prompt set's fps and manifest.json.
OutputPaths write_outputs(const GeneratedVideo &video, const PipelineConfig &config,
                          const std::filesystem::path &directory);

std::string to_json(const PipelineConfig &config);
/// Unknown keys are rejected.
PipelineConfig pipeline_config_from_json(std::string_view text);
std::string manifest_json(const GeneratedVideo &video, const PipelineConfig &config);

} // namespace framewise::pipeline
