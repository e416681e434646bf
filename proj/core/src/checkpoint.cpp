#include "seedsr/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "seedsr/errors.hpp"
#include "seedsr/stf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seedsr {

namespace {

json model_cfg_json(const DenoiserConfig& c) {
    return json{{"hr_hw", c.hr_hw},
                {"hr_c", c.hr_c},
                {"lr_hw", c.lr_hw},
                {"lr_c", c.lr_c},
                {"enc_channels", {c.enc_channels[0], c.enc_channels[1], c.enc_channels[2],
                                  c.enc_channels[3]}},
                {"bottleneck_c", c.bottleneck_c},
                {"attn_c", c.attn_c},
                {"heads", c.heads},
                {"t_embed_dim", c.t_embed_dim},
                {"use_ref", c.use_ref},
                {"use_lr", c.use_lr},
                {"lr_mode", c.lr_mode == LrMode::encoded ? "encoded" : "raw"},
                {"raw_frames", c.raw_frames},
                {"raw_hw", c.raw_hw},
                {"raw_bands", c.raw_bands},
                {"sft_c1", c.sft_c1},
                {"sft_c2", c.sft_c2}};
}

DenoiserConfig model_cfg_from_json(const json& j) {
    DenoiserConfig c;
    c.hr_hw = j.at("hr_hw");
    c.hr_c = j.at("hr_c");
    c.lr_hw = j.at("lr_hw");
    c.lr_c = j.at("lr_c");
    const auto& e = j.at("enc_channels");
    c.enc_channels = {e.at(0), e.at(1), e.at(2), e.at(3)};
    c.bottleneck_c = j.at("bottleneck_c");
    c.attn_c = j.at("attn_c");
    c.heads = j.at("heads");
    c.t_embed_dim = j.at("t_embed_dim");
    c.use_ref = j.at("use_ref");
    c.use_lr = j.at("use_lr");
    c.lr_mode = j.at("lr_mode") == "encoded" ? LrMode::encoded : LrMode::raw;
    c.raw_frames = j.at("raw_frames");
    c.raw_hw = j.at("raw_hw");
    c.raw_bands = j.at("raw_bands");
    c.sft_c1 = j.at("sft_c1");
    c.sft_c2 = j.at("sft_c2");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& dir, const DenoiserParams& params,
                     const DenoiserConfig& cfg) {
    fs::create_directories(fs::path(dir) / "params");
    json manifest;
    manifest["model"] = model_cfg_json(cfg);
    json keys = json::array();
    for (const auto& [key, t] : params.tensors) keys.push_back(key);
    manifest["keys"] = keys;
    manifest["param_count"] = params.count();
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
    for (const auto& [key, t] : params.tensors) {
        save_stf((fs::path(dir) / "params" / (key + ".stf")).string(), t);
    }
}

DenoiserParams load_checkpoint(const std::string& dir, DenoiserConfig* out_cfg) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream f(mpath);
    if (!f) {
        throw MissingArtifactError("checkpoint manifest not found at " + mpath.string() +
                                   "; run the train subcommand first");
    }
    json manifest = json::parse(f);
    const DenoiserConfig cfg = model_cfg_from_json(manifest.at("model"));
    if (out_cfg) *out_cfg = cfg;
    DenoiserParams params;
    for (const auto& jk : manifest.at("keys")) {
        const std::string key = jk;
        params.tensors.emplace(key,
                               load_stf((fs::path(dir) / "params" / (key + ".stf")).string()));
    }
    return params;
}

void save_decoder(const std::string& dir, const ToyDecoder& dec) {
    fs::create_directories(dir);
    json manifest;
    manifest["scene_px"] = dec.scene_px;
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
    save_stf((fs::path(dir) / "k1.stf").string(), dec.k1);
    save_stf((fs::path(dir) / "b1.stf").string(), dec.b1);
    save_stf((fs::path(dir) / "k2.stf").string(), dec.k2);
    save_stf((fs::path(dir) / "b2.stf").string(), dec.b2);
}

ToyDecoder load_decoder(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream f(mpath);
    if (!f) {
        throw MissingArtifactError("decoder manifest not found at " + mpath.string() +
                                   "; run the train-decoder subcommand first");
    }
    json manifest = json::parse(f);
    ToyDecoder dec;
    dec.scene_px = manifest.at("scene_px");
    dec.k1 = load_stf((fs::path(dir) / "k1.stf").string());
    dec.b1 = load_stf((fs::path(dir) / "b1.stf").string());
    dec.k2 = load_stf((fs::path(dir) / "k2.stf").string());
    dec.b2 = load_stf((fs::path(dir) / "b2.stf").string());
    return dec;
}

}  // namespace seedsr
