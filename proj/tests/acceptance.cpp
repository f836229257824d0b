// Acceptance checks. Prints one PASS/FAIL line per criterion with the
// measured values and exits non-zero if any criterion fails.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "framewise/attention.hpp"
#include "framewise/cli.hpp"
#include "framewise/diffusion.hpp"
#include "framewise/director.hpp"
#include "framewise/eval.hpp"
#include "framewise/pipeline.hpp"
#include "oracles.hpp"

using namespace framewise;
namespace fs = std::filesystem;

namespace {

constexpr double kAggregateTol = 1e-3;
constexpr double kAggregateSeconds = 1.0;
constexpr double kEquivTol = 1e-6;
constexpr double kEquivSeconds = 10.0;
constexpr double kOracleTol = 1e-6;
constexpr double kDdimTol = 1e-5;
constexpr double kForwardTol = 1e-6;
constexpr double kTemporalSeconds = 60.0;
constexpr std::uint64_t kTemporalSeed = 0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char *format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("framewise_accept_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Outcome published_aggregates() {
    const auto start = Clock::now();
    // Published per-frame CLIP scores, frames 1..8.
    const std::vector<std::vector<double>> columns = {
        {0.3208, 0.2950, 0.2894, 0.2865, 0.2935, 0.2889, 0.2858, 0.2888},
        {0.3236, 0.2947, 0.2909, 0.2931, 0.3006, 0.3013, 0.2980, 0.2988},
        {0.3143, 0.3026, 0.3056, 0.3123, 0.3137, 0.3052, 0.3103, 0.3052},
        {0.3180, 0.3077, 0.3077, 0.3095, 0.3131, 0.3122, 0.3142, 0.3077},
    };
    const double want_avg[] = {0.2930, 0.3001, 0.3087, 0.3113};
    const double want_dist[] = {0.0272, 0.0235, 0.0057, 0.0067};
    double worst_avg = 0.0, worst_dist = 0.0;
    std::string got;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const double a = eval::avg_score(columns[i]);
        const double d = eval::avg_dist(columns[i]);
        worst_avg = std::max(worst_avg, std::abs(a - want_avg[i]));
        worst_dist = std::max(worst_dist, std::abs(d - want_dist[i]));
        got += fmt(" %.5f/%.5f", a, d);
    }
    const double secs = seconds_since(start);
    return {worst_avg <= kAggregateTol && worst_dist <= kAggregateTol && secs < kAggregateSeconds,
            fmt("avg/dist:%s max|davg|=%.2e max|ddist|=%.2e (tol %.0e) %.3fs (< %.0fs)", got.c_str(), worst_avg,
                worst_dist, kAggregateTol, secs, kAggregateSeconds)};
}

attention::FrameQKV random_qkv(std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> frames(1, 6), tokens(1, 12), dim(1, 8);
    const int f = frames(rng), n = tokens(rng), d = dim(rng);
    attention::FrameQKV qkv;
    for (int i = 0; i < f; ++i) {
        qkv.queries.push_back(oracle::random_matrix(n, d, rng));
        qkv.keys.push_back(oracle::random_matrix(n, d, rng));
        qkv.values.push_back(oracle::random_matrix(n, d, rng));
    }
    return qkv;
}

double worst_diff(const std::vector<Matrix> &a, const std::vector<Matrix> &b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, oracle::max_abs_diff(a[i], b[i]));
    return worst;
}

Outcome mode_equivalence() {
    const auto start = Clock::now();
    std::mt19937_64 rng(101);
    constexpr int kMappingSteps = 96;
    double rvm_vs_first = 0.0;
    int q0_mismatch = 0, zero_mask_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto qkv = random_qkv(rng);
        std::uniform_int_distribution<int> period(kMappingSteps, 2 * kMappingSteps);
        std::uniform_int_distribution<long> step(0, kMappingSteps - 1);
        const long t_prime = step(rng);

        attention::CrossFrameConfig rvm{attention::Mode::rvm, period(rng), 0.4, true};
        attention::CrossFrameConfig first{attention::Mode::first_frame, 4, 0.4, true};
        rvm_vs_first = std::max(rvm_vs_first, worst_diff(attention::cross_frame_attention(qkv, rvm, t_prime),
                                                         attention::cross_frame_attention(qkv, first, std::nullopt)));

        attention::CrossFrameConfig rvm4{attention::Mode::rvm, 4, 0.4, true};
        attention::CrossFrameConfig dsf0{attention::Mode::rvm_dsf, 4, 0.0, trial % 2 == 0};
        const long tp = step(rng);
        if (attention::cross_frame_attention(qkv, rvm4, tp) != attention::cross_frame_attention(qkv, dsf0, tp))
            ++q0_mismatch;

        const std::vector<std::uint8_t> zeros(qkv.queries[0].rows(), 0);
        const int ref = attention::rotational_reference(tp, 4, static_cast<int>(qkv.frames())) - 1;
        attention::CrossFrameConfig per{attention::Mode::per_frame, 4, 0.4, true};
        const auto own = attention::cross_frame_attention(qkv, per, std::nullopt);
        for (std::size_t f = 0; f < qkv.frames(); ++f) {
            const auto masked = attention::filtered_value_map(qkv.queries[f], qkv.keys[f], qkv.values[f],
                                                              qkv.keys[ref], qkv.values[ref], zeros);
            if (masked != own[f])
                ++zero_mask_mismatch;
        }
    }
    const double secs = seconds_since(start);
    return {rvm_vs_first <= kEquivTol && q0_mismatch == 0 && zero_mask_mismatch == 0 && secs < kEquivSeconds,
            fmt("100 instances: rvm(m>=T')~first_frame max=%.2e (tol %.0e), rvm_dsf(q=0)!=rvm: %d, "
                "zero-mask!=per_frame: %d, %.2fs (< %.0fs)",
                rvm_vs_first, kEquivTol, q0_mismatch, zero_mask_mismatch, secs, kEquivSeconds)};
}

Outcome attention_oracles() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> tokens(1, 16), dim(1, 12);
    double worst_attn = 0.0, worst_map = 0.0, worst_dual = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = tokens(rng), m = tokens(rng), d = dim(rng), dv = dim(rng);
        const auto q = oracle::random_matrix(n, d, rng);
        const auto k = oracle::random_matrix(m, d, rng);
        const auto v = oracle::random_matrix(m, dv, rng);
        worst_attn = std::max(worst_attn, oracle::max_abs_diff(attention::scaled_attention(q, k, v),
                                                               oracle::attention(q, k, v)));
        const auto k_ref = oracle::random_matrix(n, d, rng);
        const auto v_ref = oracle::random_matrix(n, d, rng);
        worst_map = std::max(worst_map, oracle::max_abs_diff(attention::value_map(q, k_ref, v_ref),
                                                             oracle::attention(q, k_ref, v_ref)));
        const bool scale = trial % 2 == 0;
        worst_dual = std::max(worst_dual, oracle::max_abs_diff(attention::dual_softmax(q, k_ref, scale),
                                                               oracle::dual_softmax(q, k_ref, scale)));
    }
    const double worst = std::max({worst_attn, worst_map, worst_dual});
    return {worst <= kOracleTol,
            fmt("200 instances: scaled_attention %.2e, value_map %.2e, dual_softmax %.2e (tol %.0e)", worst_attn,
                worst_map, worst_dual, kOracleTol)};
}

Outcome sampler_consistency() {
    std::mt19937_64 rng(303);
    const auto schedule = diffusion::NoiseSchedule::linear(100);
    std::uniform_int_distribution<int> step(1, schedule.steps());
    double worst_ddim = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto z0 = oracle::random_matrix(16, 4, rng);
        const auto eps = oracle::random_matrix(16, 4, rng);
        const int t = step(rng);
        const int t_prev = std::uniform_int_distribution<int>(0, t - 1)(rng);
        const auto z_t = diffusion::forward_marginal(z0, schedule.alpha_bar(t), eps);
        const auto stepped = diffusion::ddim_step(z_t, eps, t, t_prev, schedule);
        worst_ddim = std::max(worst_ddim, oracle::max_abs_diff(
                                              stepped, diffusion::forward_marginal(z0, schedule.alpha_bar(t_prev), eps)));
    }
    const auto z0 = oracle::random_matrix(16, 4, rng);
    const Matrix zero(16, 4);
    double worst_fwd = 0.0;
    Matrix z = z0;
    for (int t = 1; t <= schedule.steps(); ++t) {
        z = diffusion::forward_noise_step(z, schedule.beta(t), zero);
        Matrix expect = z0;
        for (double &x : expect.values())
            x *= std::sqrt(schedule.alpha_bar(t));
        worst_fwd = std::max(worst_fwd, oracle::max_abs_diff(z, expect));
    }
    return {worst_ddim <= kDdimTol && worst_fwd <= kForwardTol,
            fmt("50 ddim tuples max=%.2e (tol %.0e), composed forward eps=0 max=%.2e (tol %.0e)", worst_ddim, kDdimTol,
                worst_fwd, kForwardTol)};
}

Outcome temporal_proxy() {
    director::MockChatClient client;
    const auto prompts = director::direct("a cat walking on the beach", 8, 4, client).prompts;
    const auto schedule = diffusion::NoiseSchedule::linear(100);
    const auto params = diffusion::DenoiserParams::from_seed(kTemporalSeed);
    diffusion::SamplerConfig config;
    config.seed = kTemporalSeed;
    const auto start = Clock::now();
    config.attention.mode = attention::Mode::per_frame;
    const auto per = diffusion::denoise_video(prompts.prompts, schedule, params, config);
    config.attention.mode = attention::Mode::rvm;
    const auto rvm = diffusion::denoise_video(prompts.prompts, schedule, params, config);
    const double secs = seconds_since(start);
    const double l2_per = eval::mean_adjacent_l2(per);
    const double l2_rvm = eval::mean_adjacent_l2(rvm);
    return {l2_rvm < l2_per && secs < kTemporalSeconds,
            fmt("seed %llu, F=8, 16x16x4, T=100: mean adjacent L2 rvm=%.4f per_frame=%.4f, both runs %.1fs (< %.0fs)",
                static_cast<unsigned long long>(kTemporalSeed), l2_rvm, l2_per, secs, kTemporalSeconds)};
}

Outcome determinism() {
    TempDir tmp;
    std::ostringstream out, err;
    const std::vector<std::string> common = {"generate", "a dog running through autumn leaves", "--mock", "--seed", "17"};
    auto args_a = common, args_b = common;
    args_a.insert(args_a.end(), {"-o", (tmp.path / "a").string()});
    args_b.insert(args_b.end(), {"-o", (tmp.path / "b").string()});
    const int ca = cli::run(args_a, out, err);
    const int cb = cli::run(args_b, out, err);
    if (ca != 0 || cb != 0)
        return {false, fmt("generate exit codes %d/%d: %s", ca, cb, err.str().c_str())};
    int png_diff = 0, pngs = 0;
    for (const auto &entry : fs::directory_iterator(tmp.path / "a"))
        if (entry.path().extension() == ".png") {
            ++pngs;
            if (slurp(entry.path()) != slurp(tmp.path / "b" / entry.path().filename()))
                ++png_diff;
        }
    const bool gif_same = slurp(tmp.path / "a" / "video.gif") == slurp(tmp.path / "b" / "video.gif");
    const bool manifest_same = nlohmann::json::parse(slurp(tmp.path / "a" / "manifest.json")) ==
                               nlohmann::json::parse(slurp(tmp.path / "b" / "manifest.json"));
    return {pngs == 8 && png_diff == 0 && gif_same && manifest_same,
            fmt("two generate runs: %d PNGs, %d differ; GIF identical=%s; manifests equal=%s", pngs, png_diff,
                gif_same ? "yes" : "no", manifest_same ? "yes" : "no")};
}

Outcome caching_purity() {
    director::MockChatClient client;
    const auto full_prompts = director::direct("a sailboat crossing a calm bay", 12, 4, client).prompts;
    pipeline::PipelineConfig config;
    config.frames = 12;
    config.batch = 8;
    config.seed = 5;
    pipeline::AttentionCache cache;
    const auto full = pipeline::generate_video(full_prompts, config, &cache);

    director::FramePromptSet first = full_prompts;
    first.prompts.resize(4);
    config.frames = 4;
    const auto small = pipeline::generate_video(first, config);

    int latent_diff = 0;
    for (std::size_t f = 0; f < 4; ++f) {
        const auto &a = full.latents.frames[f].values();
        const auto &b = small.latents.frames[f].values();
        if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0)
            ++latent_diff;
    }
    diffusion::LatentVideo subset = full.latents;
    subset.frames.resize(4);
    const auto rendered = pipeline::render_video(subset, pipeline::LatentDecoder::seeded(config.channels));
    TempDir tmp;
    int png_diff = 0;
    for (std::size_t f = 0; f < 4; ++f) {
        write_png(tmp.path / "a.png", rendered[f]);
        write_png(tmp.path / "b.png", small.frames[f]);
        if (slurp(tmp.path / "a.png") != slurp(tmp.path / "b.png"))
            ++png_diff;
    }
    return {latent_diff == 0 && png_diff == 0 && full.sections.size() == 3 && cache.reads() > 0,
            fmt("F=12,B=8 (%zu sections, %zu cache writes, %zu reads) vs F=4: frames 1-4 latents differing %d, "
                "PNGs differing %d",
                full.sections.size(), cache.writes(), cache.reads(), latent_diff, png_diff)};
}

Outcome director_round_trip() {
    std::mt19937_64 rng(404);
    const std::vector<std::string> words = {"a", "red", "fox", "under", "the", "moon", "river", "glowing", "city",
                                            "slowly", "robot", "dancing", "storm", "over", "mountains", "child"};
    director::MockChatClient client;
    int parse_fail = 0, lift_fail = 0, runs = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<int> len(1, 10), pick(0, static_cast<int>(words.size()) - 1);
        std::string prompt;
        for (int i = 0, n = len(rng); i < n; ++i)
            prompt += (i ? " " : "") + words[pick(rng)];
        for (int frames : {1, 4, 8, 16}) {
            ++runs;
            const int fps = std::uniform_int_distribution<int>(1, 8)(rng);
            auto result = director::direct(prompt, frames, fps, client);
            if (static_cast<int>(result.prompts.frame_count()) != frames) {
                ++parse_fail;
                continue;
            }
            const int k = std::uniform_int_distribution<int>(1, 2)(rng);
            const auto lifted = director::lift_fps(result.prompts, k, client, result.conversation);
            if (static_cast<int>(lifted.frame_count()) != frames << k || lifted.fps != fps << k)
                ++lift_fail;
        }
    }
    return {parse_fail == 0 && lift_fail == 0,
            fmt("%d runs (100 prompts x F in {1,4,8,16}): count mismatches %d, lift mismatches %d", runs, parse_fail,
                lift_fail)};
}

class Stub {
public:
    Stub() {
        server_.Post("/flaky", [this](const httplib::Request &, httplib::Response &res) {
            if (flaky_calls++ == 0) {
                res.status = 500;
                return;
            }
            res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Frame 1: ok"}}]})",
                            "application/json");
        });
        server_.Post("/malformed", [this](const httplib::Request &, httplib::Response &res) {
            ++malformed_calls;
            res.set_content("{\"choices\": [", "application/json");
        });
        server_.Post("/slow", [](const httplib::Request &, httplib::Response &res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1000));
            res.set_content("{}", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~Stub() {
        server_.stop();
        thread_.join();
    }
    director::DirectorConfig config(const std::string &path, int retries, double timeout) const {
        director::DirectorConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + path;
        c.max_retries = retries;
        c.timeout_seconds = timeout;
        c.backoff = std::chrono::milliseconds(10);
        c.api_key_env = "FRAMEWISE_ACCEPTANCE_UNSET_KEY";
        return c;
    }
    std::atomic<int> flaky_calls{0};
    std::atomic<int> malformed_calls{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

Outcome http_contract() {
    Stub stub;
    const std::vector<director::ChatMessage> msg = {{director::Role::user, "hi"}};
    std::string retry = "no";
    try {
        director::HttpChatClient client(stub.config("/flaky", 2, 5.0));
        if (client.complete(msg) == "Frame 1: ok" && stub.flaky_calls == 2)
            retry = "yes";
    } catch (const std::exception &e) {
        retry = std::string("threw ") + e.what();
    }
    std::string malformed = "no error";
    try {
        director::HttpChatClient(stub.config("/malformed", 3, 5.0)).complete(msg);
    } catch (const director::MalformedResponseError &) {
        malformed = stub.malformed_calls == 1 ? "MalformedResponseError" : "retried";
    } catch (const std::exception &e) {
        malformed = std::string("wrong type: ") + e.what();
    }
    std::string timeout = "no error";
    try {
        director::HttpChatClient(stub.config("/slow", 0, 0.3)).complete(msg);
    } catch (const director::TimeoutError &) {
        timeout = "TimeoutError";
    } catch (const std::exception &e) {
        timeout = std::string("wrong type: ") + e.what();
    }
    return {retry == "yes" && malformed == "MalformedResponseError" && timeout == "TimeoutError",
            fmt("500-then-200 recovered=%s (calls %d); malformed body -> %s; slow reply at 0.3s -> %s", retry.c_str(),
                stub.flaky_calls.load(), malformed.c_str(), timeout.c_str())};
}

} // namespace

int main() {
    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
        {"published-aggregates", published_aggregates},
        {"mode-equivalence", mode_equivalence},
        {"attention-oracles", attention_oracles},
        {"sampler-consistency", sampler_consistency},
        {"temporal-proxy", temporal_proxy},
        {"determinism", determinism},
        {"caching-purity", caching_purity},
        {"director-round-trip", director_round_trip},
        {"http-contract", http_contract},
    };
    int failures = 0;
    for (const auto &[name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
