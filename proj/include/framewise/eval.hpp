#pragma once

// Text-image faithfulness scores, the per-method aggregates reported for
// attention comparisons (mean score and mean distance to frame 1), and a
// latent temporal-consistency proxy.

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framewise/diffusion.hpp"
#include "framewise/image_io.hpp"

namespace framewise::eval {

/// Source of unit-norm image and text embeddings in a shared space.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<double> embed_image(const RgbImage &image) = 0;
    virtual std::vector<double> embed_text(std::string_view text) = 0;
};

/// Deterministic provider: a 4x4 grid of mean colours through a seeded
/// random projection for images, the hashed text embedding for text.
class ToyEmbeddingProvider : public EmbeddingProvider {
public:
    explicit ToyEmbeddingProvider(std::uint64_t seed = 7);
    std::vector<double> embed_image(const RgbImage &image) override;
    std::vector<double> embed_text(std::string_view text) override;

private:
    Matrix projection_; // 48 x kTextEmbeddingDim
};

/// Cosine similarity between the frame's and the prompt's embeddings.
double frame_score(const RgbImage &frame, std::string_view prompt, EmbeddingProvider &provider);

double avg_score(std::span<const double> scores);
/// (1/F) * sum_k |s_1 - s_k|; frame 1's zero term counts in the divisor.
double avg_dist(std::span<const double> scores);

/// Mean over adjacent frame pairs of the per-pixel L2 distance, divided by
/// the mean per-pixel latent norm. Invariant to a joint rescale.
double temporal_consistency(const diffusion::LatentVideo &latents);
/// Mean Frobenius distance between adjacent frames.
double mean_adjacent_l2(const diffusion::LatentVideo &latents);

struct SimilarityTable {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> columns; // one per label, F scores each

    std::size_t frames() const { return columns.empty() ? 0 : columns.front().size(); }
    void validate() const;
};

/// Header "frame,<label>...", one row per frame; with aggregates, "Avg." and
/// "Avg. Dist." rows follow.
std::string to_csv(const SimilarityTable &table, bool with_aggregates);
/// Reads the same layout; aggregate rows are ignored.
SimilarityTable read_scores_csv(std::string_view text);
/// {"<label>": {"avg": ..., "avg_dist": ...}, ...}
std::string summary_json(const SimilarityTable &table);

} // namespace framewise::eval
