#include "framewise/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "framewise/director.hpp"
#include "framewise/eval.hpp"
#include "framewise/pipeline.hpp"

namespace framewise::cli {
namespace {

using json = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

const std::set<std::string> kDirectorKeys = {"endpoint",    "model",      "timeout_seconds",
                                             "max_retries", "backoff_ms", "api_key_env"};

struct RunConfig {
    pipeline::PipelineConfig pipeline;
    director::DirectorConfig director;
};

std::string read_text(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string &path, const std::string &text, std::ostream &out) {
    if (path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f)
        throw std::runtime_error("cannot write " + path);
}

json parse_object(const std::string &text, const std::string &what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw UsageError(what + ": " + e.what());
    }
    if (!j.is_object())
        throw UsageError(what + ": expected a JSON object");
    return j;
}

std::string flag_name(const std::string &key) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    return flag;
}

// Every run-config key as a flag. Only flags actually given on the command
// line override values from the config file.
class ConfigFlags {
public:
    enum class Scope { director, all };

    void add(CLI::App &app, Scope scope) {
        app.add_option("--config", config_path_, "Flat JSON run-config file; flags override its values")
            ->check(CLI::ExistingFile);
        if (scope == Scope::all) {
            bind(app, "steps", p_.steps, "Diffusion steps T");
            bind(app, "mapping_steps", p_.mapping_steps, "Final steps T' that use the attention mode");
            bind(app, "guidance", p_.guidance, "Classifier-free guidance scale");
            bind(app, "period", p_.period, "Steps per reference frame m (rotational modes)");
            bind(app, "mode", mode_, "Self-attention mode")
                ->check(CLI::IsMember(mode_names()));
            bind(app, "quantile", p_.quantile, "Confidence quantile q for rvm_dsf");
            bind(app, "scale_dual_softmax", p_.scale_dual_softmax,
                 "Scale dual-softmax logits by 1/sqrt(d)");
        }
        bind(app, "frames", p_.frames, "Frame count F");
        bind(app, "fps", p_.fps, "Frame rate R");
        if (scope == Scope::all) {
            bind(app, "batch", p_.batch, "Frames per sampling section B");
            bind(app, "seed", p_.seed, "Random seed");
            bind(app, "motion_dx", motion_dx_, "Latent x translation per frame");
            bind(app, "motion_dy", motion_dy_, "Latent y translation per frame");
            bind(app, "height", p_.height, "Latent height");
            bind(app, "width", p_.width, "Latent width");
            bind(app, "channels", p_.channels, "Latent channels");
        }
        bind(app, "endpoint", d_.endpoint, "Chat-completion endpoint URL");
        bind(app, "model", d_.model, "Chat model name");
        bind(app, "timeout_seconds", d_.timeout_seconds, "Per-request timeout");
        bind(app, "max_retries", d_.max_retries, "Retries for transient failures");
        bind(app, "backoff_ms", backoff_ms_, "Initial retry backoff, doubled per retry");
        bind(app, "api_key_env", d_.api_key_env, "Environment variable holding the API key");
    }

    bool config_given() const { return !config_path_.empty(); }
    bool given(const std::string &key) const {
        for (const auto &o : overrides_)
            if (o.key == key)
                return o.option->count() > 0;
        return false;
    }

    /// base < config file < flags.
    RunConfig resolve(json base = json::object()) const {
        if (config_given()) {
            const auto file = parse_object(read_text(config_path_), config_path_);
            for (const auto &[key, value] : file.items())
                base[key] = value;
        }
        for (const auto &o : overrides_)
            if (o.option->count() > 0)
                o.apply(base);

        RunConfig rc;
        json pipeline_keys = json::object();
        try {
            for (const auto &[key, value] : base.items()) {
                if (!kDirectorKeys.contains(key)) {
                    pipeline_keys[key] = value;
                    continue;
                }
                if (key == "endpoint")
                    rc.director.endpoint = value.get<std::string>();
                else if (key == "model")
                    rc.director.model = value.get<std::string>();
                else if (key == "timeout_seconds")
                    rc.director.timeout_seconds = value.get<double>();
                else if (key == "max_retries")
                    rc.director.max_retries = value.get<int>();
                else if (key == "backoff_ms")
                    rc.director.backoff = std::chrono::milliseconds(value.get<int>());
                else
                    rc.director.api_key_env = value.get<std::string>();
            }
        } catch (const json::exception &e) {
            throw UsageError(std::string("run config: ") + e.what());
        }
        rc.pipeline = pipeline::pipeline_config_from_json(pipeline_keys.dump());
        rc.director.frames = rc.pipeline.frames;
        rc.director.fps = rc.pipeline.fps;
        rc.director.validate();
        return rc;
    }

private:
    struct Override {
        std::string key;
        CLI::Option *option;
        std::function<void(json &)> apply;
    };

    template <class T>
    CLI::Option *bind(CLI::App &app, const std::string &key, T &value, const std::string &help) {
        auto *opt = app.add_option(flag_name(key), value, help)->capture_default_str();
        overrides_.push_back({key, opt, [key, &value](json &j) { j[key] = value; }});
        return opt;
    }

    static std::vector<std::string> mode_names() {
        std::vector<std::string> names;
        for (auto m : attention::all_modes())
            names.emplace_back(attention::to_string(m));
        return names;
    }

    std::string config_path_;
    pipeline::PipelineConfig p_;
    director::DirectorConfig d_;
    std::string mode_ = std::string(attention::to_string(pipeline::PipelineConfig{}.mode));
    int motion_dx_ = 0;
    int motion_dy_ = 0;
    int backoff_ms_ = static_cast<int>(director::DirectorConfig{}.backoff.count());
    std::vector<Override> overrides_;
};

// Where a subcommand gets its frame prompts from.
struct PromptSource {
    std::string prompt;
    std::string prompts_file;
    std::vector<std::string> extra;
    bool mock = false;

    void add(CLI::App &app, bool allow_prompt) {
        if (allow_prompt)
            app.add_option("prompt", prompt, "User prompt handed to the director");
        auto *file = app.add_option("--prompts-file", prompts_file, "Frame-prompt JSON written by 'direct'")
                         ->check(CLI::ExistingFile);
        if (allow_prompt)
            file->excludes(app.get_option("prompt"));
        app.add_option("--extra", extra, "Extra instruction line for the director (repeatable)");
        app.add_flag("--mock", mock, "Use the deterministic offline director instead of the endpoint");
    }

    std::optional<director::FramePromptSet> load_file() const {
        if (prompts_file.empty())
            return std::nullopt;
        return director::frame_prompts_from_json(read_text(prompts_file));
    }

    /// Frame count and fps implied by a prompts file, below the config file.
    json base(const std::optional<director::FramePromptSet> &set) const {
        json j = json::object();
        if (set) {
            j["frames"] = set->frame_count();
            j["fps"] = set->fps;
        }
        return j;
    }

    director::FramePromptSet obtain(const std::optional<director::FramePromptSet> &set, const RunConfig &rc) const {
        if (set) {
            if (static_cast<int>(set->frame_count()) != rc.pipeline.frames)
                throw UsageError("prompts file has " + std::to_string(set->frame_count()) +
                                 " frames but --frames is " + std::to_string(rc.pipeline.frames));
            return *set;
        }
        if (prompt.empty())
            throw UsageError("give a prompt or --prompts-file");
        auto client = director::make_client(rc.director, mock);
        return director::direct(prompt, rc.pipeline.frames, rc.pipeline.fps, *client, extra).prompts;
    }
};

eval::SimilarityTable score_frames(const std::vector<RgbImage> &frames, const director::FramePromptSet &prompts,
                                   const std::string &label) {
    eval::ToyEmbeddingProvider provider;
    eval::SimilarityTable table;
    table.labels = {label};
    table.columns.emplace_back();
    for (std::size_t i = 0; i < frames.size(); ++i)
        table.columns[0].push_back(eval::frame_score(frames[i], prompts.prompts.at(i), provider));
    return table;
}

int dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Frame-wise directed text-to-video generation with cross-frame attention", "framewise"};
    app.require_subcommand(1);

    // direct
    auto *direct_cmd = app.add_subcommand("direct", "Ask the director for per-frame prompts");
    ConfigFlags direct_flags;
    std::string direct_prompt;
    std::vector<std::string> direct_extra;
    bool direct_mock = false;
    int direct_lift = 0;
    std::string direct_out = "-";
    direct_cmd->add_option("prompt", direct_prompt, "User prompt")->required();
    direct_flags.add(*direct_cmd, ConfigFlags::Scope::director);
    direct_cmd->add_option("--extra", direct_extra, "Extra instruction line (repeatable)");
    direct_cmd->add_flag("--mock", direct_mock, "Use the deterministic offline director");
    direct_cmd->add_option("--lift", direct_lift, "FPS-lifting iterations after directing")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    direct_cmd->add_option("-o,--out", direct_out, "Output JSON file ('-' for stdout)")->capture_default_str();

    // lift-fps
    auto *lift_cmd = app.add_subcommand("lift-fps", "Double the frame rate of a prompt set k times");
    ConfigFlags lift_flags;
    std::string lift_file;
    int lift_iterations = 1;
    bool lift_mock = false;
    std::string lift_out = "-";
    lift_cmd->add_option("--prompts-file", lift_file, "Frame-prompt JSON")->required()->check(CLI::ExistingFile);
    lift_cmd->add_option("-k,--iterations", lift_iterations, "Lifting iterations")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    lift_flags.add(*lift_cmd, ConfigFlags::Scope::director);
    lift_cmd->add_flag("--mock", lift_mock, "Use the deterministic offline director");
    lift_cmd->add_option("-o,--out", lift_out, "Output JSON file ('-' for stdout)")->capture_default_str();

    // generate
    auto *gen_cmd = app.add_subcommand("generate", "Generate a video: PNG frames, GIF and manifest");
    ConfigFlags gen_flags;
    PromptSource gen_source;
    std::string gen_replay;
    std::string gen_out = "out";
    gen_source.add(*gen_cmd, true);
    gen_flags.add(*gen_cmd, ConfigFlags::Scope::all);
    gen_cmd->add_option("--replay", gen_replay, "Regenerate from a manifest.json (flags still override)")
        ->check(CLI::ExistingFile)
        ->excludes(gen_cmd->get_option("prompt"))
        ->excludes(gen_cmd->get_option("--prompts-file"))
        ->excludes(gen_cmd->get_option("--config"));
    gen_cmd->add_option("-o,--out", gen_out, "Output directory")->capture_default_str();

    // compare-attention
    auto *cmp_cmd = app.add_subcommand("compare-attention", "Per-frame text-image scores for several attention modes");
    ConfigFlags cmp_flags;
    PromptSource cmp_source;
    std::vector<std::string> cmp_modes = {"per_frame", "first_frame", "sparse_causal", "rvm", "rvm_dsf"};
    std::string cmp_out = "-";
    std::string cmp_json;
    cmp_source.add(*cmp_cmd, true);
    cmp_flags.add(*cmp_cmd, ConfigFlags::Scope::all);
    cmp_cmd->add_option("--modes", cmp_modes, "Comma-separated attention modes")
        ->delimiter(',')
        ->capture_default_str()
        ->check(CLI::IsMember(cmp_modes));
    cmp_cmd->add_option("-o,--out", cmp_out, "Output CSV file ('-' for stdout)")->capture_default_str();
    cmp_cmd->add_option("--summary", cmp_json, "Also write per-mode aggregates as JSON to this file");

    // eval
    auto *eval_cmd = app.add_subcommand("eval", "Aggregate per-frame scores (Avg., Avg. Dist.)");
    std::string eval_scores;
    std::string eval_video;
    bool eval_json = false;
    auto *scores_opt = eval_cmd->add_option("--scores", eval_scores, "CSV of per-frame scores, one column per method")
                           ->check(CLI::ExistingFile);
    eval_cmd->add_option("--video", eval_video, "Output directory of 'generate' to score")
        ->check(CLI::ExistingDirectory)
        ->excludes(scores_opt);
    eval_cmd->add_flag("--json", eval_json, "Print aggregates as JSON instead of CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        return app.exit(e, out, err) == 0 ? ExitCode::ok : ExitCode::usage;
    }

    if (*direct_cmd) {
        const auto rc = direct_flags.resolve();
        auto client = director::make_client(rc.director, direct_mock);
        auto result = director::direct(direct_prompt, rc.pipeline.frames, rc.pipeline.fps, *client, direct_extra);
        if (direct_lift > 0)
            result.prompts = director::lift_fps(result.prompts, direct_lift, *client, result.conversation);
        write_text(direct_out, director::to_json(result.prompts) + "\n", out);
    } else if (*lift_cmd) {
        const auto set = director::frame_prompts_from_json(read_text(lift_file));
        const auto rc = lift_flags.resolve(json{{"frames", set.frame_count()}, {"fps", set.fps}});
        auto client = director::make_client(rc.director, lift_mock);
        const auto lifted = director::lift_fps(set, lift_iterations, *client);
        write_text(lift_out, director::to_json(lifted) + "\n", out);
    } else if (*gen_cmd) {
        std::optional<director::FramePromptSet> set;
        RunConfig rc;
        if (!gen_replay.empty()) {
            const auto manifest = parse_object(read_text(gen_replay), gen_replay);
            if (!manifest.contains("config") || !manifest.contains("prompts"))
                throw UsageError(gen_replay + ": not a manifest");
            set = director::frame_prompts_from_json(manifest.at("prompts").dump());
            rc = gen_flags.resolve(manifest.at("config"));
        } else {
            set = gen_source.load_file();
            rc = gen_flags.resolve(gen_source.base(set));
        }
        const auto prompts = gen_source.obtain(set, rc);
        const auto video = pipeline::generate_video(prompts, rc.pipeline);
        const auto paths = pipeline::write_outputs(video, rc.pipeline, gen_out);
        out << paths.manifest.string() << '\n';
    } else if (*cmp_cmd) {
        const auto set = cmp_source.load_file();
        auto rc = cmp_flags.resolve(cmp_source.base(set));
        const auto prompts = cmp_source.obtain(set, rc);
        eval::SimilarityTable table;
        for (const auto &name : cmp_modes) {
            rc.pipeline.mode = attention::parse_mode(name);
            const auto video = pipeline::generate_video(prompts, rc.pipeline);
            auto column = score_frames(video.frames, prompts, name);
            table.labels.push_back(name);
            table.columns.push_back(std::move(column.columns[0]));
        }
        write_text(cmp_out, eval::to_csv(table, true), out);
        if (!cmp_json.empty())
            write_text(cmp_json, eval::summary_json(table) + "\n", out);
    } else if (*eval_cmd) {
        eval::SimilarityTable table;
        if (!eval_scores.empty()) {
            table = eval::read_scores_csv(read_text(eval_scores));
        } else if (!eval_video.empty()) {
            const std::filesystem::path dir = eval_video;
            const auto manifest = parse_object(read_text(dir / "manifest.json"), "manifest.json");
            const auto prompts = director::frame_prompts_from_json(manifest.at("prompts").dump());
            std::vector<RgbImage> frames;
            for (const auto &name : manifest.at("files").at("frames"))
                frames.push_back(read_png(dir / name.get<std::string>()));
            if (frames.size() != prompts.frame_count())
                throw std::runtime_error("manifest lists a different number of frames than prompts");
            table = score_frames(frames, prompts, "video");
        } else {
            throw UsageError("eval needs --scores or --video");
        }
        out << (eval_json ? eval::summary_json(table) + "\n" : eval::to_csv(table, true));
    }
    return ExitCode::ok;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    try {
        return dispatch(args, out, err);
    } catch (const std::invalid_argument &e) {
        err << "usage error: " << e.what() << '\n';
        return ExitCode::usage;
    } catch (const director::ParseError &e) {
        err << "director output rejected: " << e.what() << '\n';
        return ExitCode::runtime;
    } catch (const director::ChatError &e) {
        err << "chat endpoint failed: " << e.what() << '\n';
        return ExitCode::network;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return ExitCode::runtime;
    }
}

} // namespace framewise::cli
