#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "framewise/diffusion.hpp"

namespace framewise::diffusion {
namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

TextEmbedding embed_text(std::string_view prompt, std::size_t dim) {
    if (dim < 2)
        throw std::invalid_argument("embed_text: dimension must be >= 2");
    std::istringstream in{std::string(prompt)};
    std::vector<std::string> tokens;
    for (std::string tok; in >> tok;)
        tokens.push_back(std::move(tok));
    if (tokens.empty())
        throw std::invalid_argument("embed_text: prompt is empty");

    TextEmbedding emb;
    emb.values.assign(dim, 0.0);
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        const std::uint64_t h = fnv1a(tokens[p]);
        emb.values[h % dim] += 1.0;
        // Position mixing: a small sinusoid whose phase depends on the token
        // hash and its position, so word order changes the embedding.
        const double phase = static_cast<double>((h >> 32) % 1024) / 1024.0 * 2.0 * std::numbers::pi;
        for (std::size_t j = 0; j < dim; ++j) {
            const double freq = 1.0 / std::pow(100.0, static_cast<double>(j) / static_cast<double>(dim));
            emb.values[j] += 0.25 * std::sin(static_cast<double>(p + 1) * freq + phase +
                                             static_cast<double>(j));
        }
    }
    double norm = 0.0;
    for (double x : emb.values)
        norm += x * x;
    norm = std::sqrt(norm);
    for (double &x : emb.values)
        x /= norm;
    return emb;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine_similarity: vectors must be non-empty and equal length");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero vector");
    return ab / std::sqrt(aa * bb);
}

} // namespace framewise::diffusion
