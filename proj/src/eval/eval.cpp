#include "framewise/eval.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

namespace framewise::eval {
namespace {

constexpr int kGrid = 4;

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    for (auto &c : cells) {
        const auto a = c.find_first_not_of(" \t\r");
        const auto b = c.find_last_not_of(" \t\r");
        c = a == std::string::npos ? std::string() : c.substr(a, b - a + 1);
    }
    return cells;
}

void require_scores(std::span<const double> scores, const char *what) {
    if (scores.empty())
        throw std::invalid_argument(std::string(what) + ": no scores");
    for (double s : scores)
        if (!std::isfinite(s))
            throw std::invalid_argument(std::string(what) + ": non-finite score");
}

double pixel_norm(std::span<const double> row) {
    double s = 0.0;
    for (double v : row)
        s += v * v;
    return std::sqrt(s);
}

} // namespace

ToyEmbeddingProvider::ToyEmbeddingProvider(std::uint64_t seed)
    : projection_(kGrid * kGrid * 3, diffusion::kTextEmbeddingDim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double &w : projection_.values())
        w = normal(rng);
}

std::vector<double> ToyEmbeddingProvider::embed_image(const RgbImage &image) {
    if (image.width < 1 || image.height < 1)
        throw std::invalid_argument("embed_image: empty image");
    Matrix pooled(1, kGrid * kGrid * 3);
    std::vector<int> counts(kGrid * kGrid, 0);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const int cell = (y * kGrid / image.height) * kGrid + x * kGrid / image.width;
            const auto *px = image.at(x, y);
            for (int c = 0; c < 3; ++c)
                pooled(0, static_cast<std::size_t>(cell * 3 + c)) += px[c] / 127.5 - 1.0;
            ++counts[static_cast<std::size_t>(cell)];
        }
    for (int cell = 0; cell < kGrid * kGrid; ++cell)
        for (int c = 0; c < 3; ++c)
            if (counts[static_cast<std::size_t>(cell)] > 0)
                pooled(0, static_cast<std::size_t>(cell * 3 + c)) /= counts[static_cast<std::size_t>(cell)];
    const Matrix projected = matmul(pooled, projection_);
    std::vector<double> out(projected.values().begin(), projected.values().end());
    double norm = pixel_norm(out);
    if (norm == 0.0) {
        out[0] = 1.0;
        norm = 1.0;
    }
    for (double &v : out)
        v /= norm;
    return out;
}

std::vector<double> ToyEmbeddingProvider::embed_text(std::string_view text) {
    return diffusion::embed_text(text).values;
}

double frame_score(const RgbImage &frame, std::string_view prompt, EmbeddingProvider &provider) {
    const auto image = provider.embed_image(frame);
    const auto text = provider.embed_text(prompt);
    return diffusion::cosine_similarity(image, text);
}

double avg_score(std::span<const double> scores) {
    require_scores(scores, "avg_score");
    double sum = 0.0;
    for (double s : scores)
        sum += s;
    return sum / static_cast<double>(scores.size());
}

double avg_dist(std::span<const double> scores) {
    require_scores(scores, "avg_dist");
    double sum = 0.0;
    for (double s : scores)
        sum += std::abs(scores.front() - s);
    return sum / static_cast<double>(scores.size());
}

double temporal_consistency(const diffusion::LatentVideo &latents) {
    latents.validate();
    if (latents.frame_count() < 2)
        throw std::invalid_argument("temporal_consistency: need at least two frames");
    const std::size_t pixels = latents.frames.front().rows();

    double norm = 0.0;
    for (const auto &f : latents.frames)
        for (std::size_t p = 0; p < pixels; ++p)
            norm += pixel_norm(f.row(p));
    norm /= static_cast<double>(pixels * latents.frame_count());
    if (norm == 0.0)
        return 0.0;

    double dist = 0.0;
    std::vector<double> diff(static_cast<std::size_t>(latents.channels));
    for (std::size_t f = 0; f + 1 < latents.frame_count(); ++f) {
        double pair = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            const auto a = latents.frames[f].row(p);
            const auto b = latents.frames[f + 1].row(p);
            for (std::size_t c = 0; c < diff.size(); ++c)
                diff[c] = b[c] - a[c];
            pair += pixel_norm(diff);
        }
        dist += pair / static_cast<double>(pixels);
    }
    dist /= static_cast<double>(latents.frame_count() - 1);
    return dist / norm;
}

double mean_adjacent_l2(const diffusion::LatentVideo &latents) {
    latents.validate();
    if (latents.frame_count() < 2)
        throw std::invalid_argument("mean_adjacent_l2: need at least two frames");
    double total = 0.0;
    for (std::size_t f = 0; f + 1 < latents.frame_count(); ++f) {
        double sq = 0.0;
        const auto a = latents.frames[f].values();
        const auto b = latents.frames[f + 1].values();
        for (std::size_t i = 0; i < a.size(); ++i)
            sq += (b[i] - a[i]) * (b[i] - a[i]);
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(latents.frame_count() - 1);
}

void SimilarityTable::validate() const {
    if (labels.empty() || labels.size() != columns.size())
        throw std::invalid_argument("SimilarityTable: one column per label is required");
    for (const auto &col : columns) {
        if (col.size() != columns.front().size())
            throw std::invalid_argument("SimilarityTable: columns differ in length");
        require_scores(col, "SimilarityTable");
    }
}

std::string to_csv(const SimilarityTable &table, bool with_aggregates) {
    table.validate();
    std::ostringstream out;
    out << "frame";
    for (const auto &l : table.labels)
        out << ',' << l;
    out << '\n' << std::fixed << std::setprecision(4);
    for (std::size_t f = 0; f < table.frames(); ++f) {
        out << f + 1;
        for (const auto &col : table.columns)
            out << ',' << col[f];
        out << '\n';
    }
    if (with_aggregates) {
        out << "Avg.";
        for (const auto &col : table.columns)
            out << ',' << avg_score(col);
        out << "\nAvg. Dist.";
        for (const auto &col : table.columns)
            out << ',' << avg_dist(col);
        out << '\n';
    }
    return out.str();
}

SimilarityTable read_scores_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    SimilarityTable table;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto cells = split_csv_line(line);
        if (table.labels.empty()) {
            if (cells.size() < 2)
                throw std::invalid_argument("scores CSV: header needs a frame column and at least one label");
            table.labels.assign(cells.begin() + 1, cells.end());
            table.columns.resize(table.labels.size());
            continue;
        }
        if (cells.front().rfind("Avg", 0) == 0)
            continue;
        if (cells.size() != table.labels.size() + 1)
            throw std::invalid_argument("scores CSV: row '" + line + "' has the wrong column count");
        for (std::size_t c = 1; c < cells.size(); ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size())
                throw std::invalid_argument("scores CSV: '" + cells[c] + "' is not a number");
            table.columns[c - 1].push_back(v);
        }
    }
    if (table.labels.empty())
        throw std::invalid_argument("scores CSV: empty input");
    if (table.frames() == 0)
        throw std::invalid_argument("scores CSV: no frame rows");
    table.validate();
    return table;
}

std::string summary_json(const SimilarityTable &table) {
    table.validate();
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < table.labels.size(); ++i)
        j[table.labels[i]] = {{"avg", avg_score(table.columns[i])},
                              {"avg_dist", avg_dist(table.columns[i])},
                              {"frames", table.columns[i].size()}};
    return j.dump(2);
}

} // namespace framewise::eval
