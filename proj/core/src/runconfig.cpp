#include "seedsr/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "seedsr/errors.hpp"

namespace seedsr {

void RunConfig::validate() const {
    model.validate();
    train.validate();
    world.validate();
    if (sched_T < 2) throw ConfigError("config: schedule T must be >= 2");
    if (sampler.t_inf < 0 || sampler.t_inf > sched_T) {
        throw ConfigError("config: t_inf must be in [0,T]");
    }
    if (sampler.n_samples < 1) throw ConfigError("config: n_samples must be >= 1");
    if (n_scenes < 1) throw ConfigError("config: n_scenes must be >= 1");
    if (!(post_threshold > 0.0 && post_threshold < 1.0)) {
        throw ConfigError("config: post threshold must be in (0,1)");
    }
    if (min_marker_dist <= 0.0) throw ConfigError("config: min_marker_dist must be > 0");
    if (overlap_threshold < 0.0 || overlap_threshold >= 100.0) {
        throw ConfigError("config: overlap_threshold must be in [0,100)");
    }
}

RunConfig preset_desk() { return RunConfig{}; }

RunConfig preset_paper() {
    RunConfig c;
    c.model = paper_config();
    c.sched_T = 500;
    c.sampler.t_inf = 470;
    c.train.lr = 5e-4;
    c.train.batch = 128;
    c.train.steps = 200000;
    return c;
}

RunConfig preset_by_name(const std::string& name) {
    if (name == "desk") return preset_desk();
    if (name == "paper") return preset_paper();
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

namespace {

struct Setter {
    std::function<void(RunConfig&, const std::string&)> fn;
};

int parse_int(const std::string& v) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("expected integer, got '" + v + "'");
    }
    return out;
}

uint64_t parse_u64(const std::string& v) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("expected unsigned integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected true/false, got '" + v + "'");
}

std::array<int, 4> parse_int4(const std::string& v) {
    std::array<int, 4> out{};
    std::stringstream ss(v);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= 4) throw ConfigError("expected 4 comma-separated integers, got '" + v + "'");
        // trim
        const auto b = tok.find_first_not_of(" \t");
        const auto e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) throw ConfigError("empty list element in '" + v + "'");
        out[static_cast<size_t>(i++)] = parse_int(tok.substr(b, e - b + 1));
    }
    if (i != 4) throw ConfigError("expected 4 comma-separated integers, got '" + v + "'");
    return out;
}

using KeyTable = std::map<std::string, std::map<std::string, Setter>>;

const KeyTable& key_table() {
    static const KeyTable table = [] {
        KeyTable t;
        auto& run = t["run"];
        run["seed"] = {[](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }};

        auto& m = t["model"];
        m["hr_hw"] = {[](RunConfig& c, const std::string& v) { c.model.hr_hw = parse_int(v); }};
        m["hr_c"] = {[](RunConfig& c, const std::string& v) { c.model.hr_c = parse_int(v); }};
        m["lr_hw"] = {[](RunConfig& c, const std::string& v) { c.model.lr_hw = parse_int(v); }};
        m["lr_c"] = {[](RunConfig& c, const std::string& v) { c.model.lr_c = parse_int(v); }};
        m["enc_channels"] = {
            [](RunConfig& c, const std::string& v) { c.model.enc_channels = parse_int4(v); }};
        m["bottleneck_c"] = {
            [](RunConfig& c, const std::string& v) { c.model.bottleneck_c = parse_int(v); }};
        m["attn_c"] = {[](RunConfig& c, const std::string& v) { c.model.attn_c = parse_int(v); }};
        m["heads"] = {[](RunConfig& c, const std::string& v) { c.model.heads = parse_int(v); }};
        m["t_embed_dim"] = {
            [](RunConfig& c, const std::string& v) { c.model.t_embed_dim = parse_int(v); }};
        m["use_ref"] = {[](RunConfig& c, const std::string& v) { c.model.use_ref = parse_bool(v); }};
        m["use_lr"] = {[](RunConfig& c, const std::string& v) { c.model.use_lr = parse_bool(v); }};
        m["lr_mode"] = {[](RunConfig& c, const std::string& v) {
            if (v == "encoded") c.model.lr_mode = LrMode::encoded;
            else if (v == "raw") c.model.lr_mode = LrMode::raw;
            else throw ConfigError("lr_mode must be encoded or raw, got '" + v + "'");
        }};
        m["raw_frames"] = {
            [](RunConfig& c, const std::string& v) { c.model.raw_frames = parse_int(v); }};
        m["raw_hw"] = {[](RunConfig& c, const std::string& v) { c.model.raw_hw = parse_int(v); }};
        m["raw_bands"] = {
            [](RunConfig& c, const std::string& v) { c.model.raw_bands = parse_int(v); }};
        m["sft_c1"] = {[](RunConfig& c, const std::string& v) { c.model.sft_c1 = parse_int(v); }};
        m["sft_c2"] = {[](RunConfig& c, const std::string& v) { c.model.sft_c2 = parse_int(v); }};

        auto& s = t["schedule"];
        s["T"] = {[](RunConfig& c, const std::string& v) { c.sched_T = parse_int(v); }};
        s["beta_start"] = {
            [](RunConfig& c, const std::string& v) { c.beta_start = parse_double(v); }};
        s["beta_end"] = {[](RunConfig& c, const std::string& v) { c.beta_end = parse_double(v); }};

        auto& sa = t["sampler"];
        sa["t_inf"] = {[](RunConfig& c, const std::string& v) { c.sampler.t_inf = parse_int(v); }};
        sa["n_samples"] = {
            [](RunConfig& c, const std::string& v) { c.sampler.n_samples = parse_int(v); }};

        auto& tr = t["train"];
        tr["lr"] = {[](RunConfig& c, const std::string& v) { c.train.lr = parse_double(v); }};
        tr["batch"] = {[](RunConfig& c, const std::string& v) { c.train.batch = parse_int(v); }};
        tr["steps"] = {[](RunConfig& c, const std::string& v) { c.train.steps = parse_int(v); }};
        tr["weight_decay"] = {
            [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_double(v); }};
        tr["adam_beta1"] = {
            [](RunConfig& c, const std::string& v) { c.train.adam_beta1 = parse_double(v); }};
        tr["adam_beta2"] = {
            [](RunConfig& c, const std::string& v) { c.train.adam_beta2 = parse_double(v); }};
        tr["adam_eps"] = {
            [](RunConfig& c, const std::string& v) { c.train.adam_eps = parse_double(v); }};
        tr["checkpoint_every"] = {
            [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = parse_int(v); }};

        auto& w = t["world"];
        w["scene_px"] = {[](RunConfig& c, const std::string& v) { c.world.scene_px = parse_int(v); }};
        w["hr_hw"] = {[](RunConfig& c, const std::string& v) { c.world.hr_hw = parse_int(v); }};
        w["hr_c"] = {[](RunConfig& c, const std::string& v) { c.world.hr_c = parse_int(v); }};
        w["lr_hw"] = {[](RunConfig& c, const std::string& v) { c.world.lr_hw = parse_int(v); }};
        w["lr_c"] = {[](RunConfig& c, const std::string& v) { c.world.lr_c = parse_int(v); }};
        w["enc_hidden"] = {
            [](RunConfig& c, const std::string& v) { c.world.enc_hidden = parse_int(v); }};
        w["min_fields"] = {
            [](RunConfig& c, const std::string& v) { c.world.min_fields = parse_int(v); }};
        w["max_fields"] = {
            [](RunConfig& c, const std::string& v) { c.world.max_fields = parse_int(v); }};
        w["min_merges"] = {
            [](RunConfig& c, const std::string& v) { c.world.min_merges = parse_int(v); }};
        w["max_merges"] = {
            [](RunConfig& c, const std::string& v) { c.world.max_merges = parse_int(v); }};
        w["min_splits"] = {
            [](RunConfig& c, const std::string& v) { c.world.min_splits = parse_int(v); }};
        w["max_splits"] = {
            [](RunConfig& c, const std::string& v) { c.world.max_splits = parse_int(v); }};
        w["noise_sigma"] = {
            [](RunConfig& c, const std::string& v) { c.world.noise_sigma = parse_double(v); }};
        w["color_drift"] = {
            [](RunConfig& c, const std::string& v) { c.world.color_drift = parse_double(v); }};
        w["encoder_seed"] = {
            [](RunConfig& c, const std::string& v) { c.world.encoder_seed = parse_u64(v); }};
        w["n_scenes"] = {[](RunConfig& c, const std::string& v) { c.n_scenes = parse_int(v); }};

        auto& d = t["decoder"];
        d["steps"] = {[](RunConfig& c, const std::string& v) { c.decoder.steps = parse_int(v); }};
        d["batch"] = {[](RunConfig& c, const std::string& v) { c.decoder.batch = parse_int(v); }};
        d["lr"] = {[](RunConfig& c, const std::string& v) { c.decoder.lr = parse_double(v); }};
        d["accuracy_gate"] = {
            [](RunConfig& c, const std::string& v) { c.decoder.accuracy_gate = parse_double(v); }};
        d["seed"] = {[](RunConfig& c, const std::string& v) { c.decoder.seed = parse_u64(v); }};
        d["hidden"] = {[](RunConfig& c, const std::string& v) { c.decoder.hidden = parse_int(v); }};

        auto& po = t["post"];
        po["threshold"] = {
            [](RunConfig& c, const std::string& v) { c.post_threshold = parse_double(v); }};
        po["min_marker_dist"] = {
            [](RunConfig& c, const std::string& v) { c.min_marker_dist = parse_double(v); }};

        auto& me = t["metrics"];
        me["overlap_threshold"] = {
            [](RunConfig& c, const std::string& v) { c.overlap_threshold = parse_double(v); }};
        me["overlap_basis"] = {[](RunConfig& c, const std::string& v) {
            if (v == "pred") c.overlap_basis = OverlapBasis::pred;
            else if (v == "gt") c.overlap_basis = OverlapBasis::gt;
            else throw ConfigError("overlap_basis must be pred or gt, got '" + v + "'");
        }};
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    const KeyTable& table = key_table();
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header '" + line + "'");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (table.find(section) == table.end()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value, got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                              "' before any [section]");
        }
        const auto& sect = table.at(section);
        auto it = sect.find(key);
        if (it == sect.end()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        }
        try {
            it->second.fn(base, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw MissingArtifactError("config file not found: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), std::move(base));
}

std::string config_echo(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "[run]\n";
    os << "seed = " << c.seed << "\n";
    os << "[model]\n";
    os << "hr_hw = " << c.model.hr_hw << "\n";
    os << "hr_c = " << c.model.hr_c << "\n";
    os << "lr_hw = " << c.model.lr_hw << "\n";
    os << "lr_c = " << c.model.lr_c << "\n";
    os << "enc_channels = " << c.model.enc_channels[0] << "," << c.model.enc_channels[1] << ","
       << c.model.enc_channels[2] << "," << c.model.enc_channels[3] << "\n";
    os << "bottleneck_c = " << c.model.bottleneck_c << "\n";
    os << "attn_c = " << c.model.attn_c << "\n";
    os << "heads = " << c.model.heads << "\n";
    os << "t_embed_dim = " << c.model.t_embed_dim << "\n";
    os << "use_ref = " << (c.model.use_ref ? "true" : "false") << "\n";
    os << "use_lr = " << (c.model.use_lr ? "true" : "false") << "\n";
    os << "lr_mode = " << (c.model.lr_mode == LrMode::encoded ? "encoded" : "raw") << "\n";
    os << "raw_frames = " << c.model.raw_frames << "\n";
    os << "raw_hw = " << c.model.raw_hw << "\n";
    os << "raw_bands = " << c.model.raw_bands << "\n";
    os << "sft_c1 = " << c.model.sft_c1 << "\n";
    os << "sft_c2 = " << c.model.sft_c2 << "\n";
    os << "[schedule]\n";
    os << "T = " << c.sched_T << "\n";
    os << "beta_start = " << c.beta_start << "\n";
    os << "beta_end = " << c.beta_end << "\n";
    os << "[sampler]\n";
    os << "t_inf = " << c.sampler.t_inf << "\n";
    os << "n_samples = " << c.sampler.n_samples << "\n";
    os << "[train]\n";
    os << "lr = " << c.train.lr << "\n";
    os << "batch = " << c.train.batch << "\n";
    os << "steps = " << c.train.steps << "\n";
    os << "weight_decay = " << c.train.weight_decay << "\n";
    os << "adam_beta1 = " << c.train.adam_beta1 << "\n";
    os << "adam_beta2 = " << c.train.adam_beta2 << "\n";
    os << "adam_eps = " << c.train.adam_eps << "\n";
    os << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    os << "[world]\n";
    os << "scene_px = " << c.world.scene_px << "\n";
    os << "hr_hw = " << c.world.hr_hw << "\n";
    os << "hr_c = " << c.world.hr_c << "\n";
    os << "lr_hw = " << c.world.lr_hw << "\n";
    os << "lr_c = " << c.world.lr_c << "\n";
    os << "enc_hidden = " << c.world.enc_hidden << "\n";
    os << "min_fields = " << c.world.min_fields << "\n";
    os << "max_fields = " << c.world.max_fields << "\n";
    os << "min_merges = " << c.world.min_merges << "\n";
    os << "max_merges = " << c.world.max_merges << "\n";
    os << "min_splits = " << c.world.min_splits << "\n";
    os << "max_splits = " << c.world.max_splits << "\n";
    os << "noise_sigma = " << c.world.noise_sigma << "\n";
    os << "color_drift = " << c.world.color_drift << "\n";
    os << "encoder_seed = " << c.world.encoder_seed << "\n";
    os << "n_scenes = " << c.n_scenes << "\n";
    os << "[decoder]\n";
    os << "steps = " << c.decoder.steps << "\n";
    os << "batch = " << c.decoder.batch << "\n";
    os << "lr = " << c.decoder.lr << "\n";
    os << "accuracy_gate = " << c.decoder.accuracy_gate << "\n";
    os << "seed = " << c.decoder.seed << "\n";
    os << "hidden = " << c.decoder.hidden << "\n";
    os << "[post]\n";
    os << "threshold = " << c.post_threshold << "\n";
    os << "min_marker_dist = " << c.min_marker_dist << "\n";
    os << "[metrics]\n";
    os << "overlap_threshold = " << c.overlap_threshold << "\n";
    os << "overlap_basis = " << (c.overlap_basis == OverlapBasis::pred ? "pred" : "gt") << "\n";
    return os.str();
}

}  // namespace seedsr
