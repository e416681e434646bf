// seedsr: conditional latent-diffusion embedding super-resolution for field
// boundary segmentation on a synthetic world. Subcommands cover the whole
// pipeline: gen-data, train-decoder, train, infer, eval, shapes, cost.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "seedsr/costmodel.hpp"
#include "seedsr/errors.hpp"
#include "seedsr/pipeline.hpp"

using namespace seedsr;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset = "desk";
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    bool no_ref = false, lr_only = false, ref_only = false;
};

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg = preset_by_name(o.preset);
    if (!o.config_path.empty()) cfg = load_run_config(o.config_path, cfg);
    if (o.seed_set) cfg.seed = o.seed;
    if (o.no_ref || o.lr_only) cfg.model.use_ref = false;
    if (o.ref_only) cfg.model.use_lr = false;
    if (o.lr_only && o.ref_only) {
        throw ConfigError("--lr-only and --ref-only are mutually exclusive");
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedding-space diffusion super-resolution pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonOpts o;
    app.add_option("--config", o.config_path, "run config file (sectioned key = value)");
    app.add_option("--preset", o.preset, "base preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", o.seed, "global seed")->each([&](const std::string&) { o.seed_set = true; });
    app.add_option("--out", o.out, "output directory or file");
    app.add_flag("--no-ref", o.no_ref, "drop the reference conditioning branch");
    app.add_flag("--lr-only", o.lr_only, "condition on the LR embedding only");
    app.add_flag("--ref-only", o.ref_only, "condition on the reference embedding only");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");

    std::string data_dir, decoder_dir, ckpt_dir, infer_dir, split = "val";
    auto* tdec = app.add_subcommand("train-decoder", "train and freeze the toy decoder");
    tdec->add_option("--data", data_dir, "dataset directory")->required();

    auto* tr = app.add_subcommand("train", "train the conditional denoiser");
    tr->add_option("--data", data_dir, "dataset directory")->required();

    int n_seeds = 4, t_inf = 0;
    auto* inf = app.add_subcommand("infer", "sample embeddings and segment");
    inf->add_option("--data", data_dir, "dataset directory")->required();
    inf->add_option("--decoder", decoder_dir, "frozen decoder directory")->required();
    inf->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    inf->add_option("--n-seeds", n_seeds, "samples per scene (averaged logits)");
    inf->add_option("--t-inf", t_inf, "reverse steps executed (0: config value)");
    inf->add_option("--split", split, "dataset split to run on");

    double overlap_threshold = -1.0;
    std::string overlap_basis;
    auto* ev = app.add_subcommand("eval", "score inference outputs");
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--decoder", decoder_dir, "frozen decoder directory")->required();
    ev->add_option("--infer", infer_dir, "inference output directory")->required();
    ev->add_option("--overlap-threshold", overlap_threshold, "instance overlap percent");
    ev->add_option("--overlap-basis", overlap_basis, "pred or gt")
        ->check(CLI::IsMember({"pred", "gt"}));

    auto* sh = app.add_subcommand("shapes", "print the layer dimension table");

    int cost_small = 7, cost_large = 120, cost_heads = 16, cost_head_dim = 64;
    auto* co = app.add_subcommand("cost", "print the attention cost table");
    co->add_option("--hw-small", cost_small, "bottleneck spatial side");
    co->add_option("--hw-large", cost_large, "full-resolution spatial side");
    co->add_option("--heads", cost_heads, "attention heads");
    co->add_option("--head-dim", cost_head_dim, "per-head feature dim");

    CLI11_PARSE(app, argc, argv);

    try {
        if (co->parsed()) {
            std::cout << cost_table(cost_small, cost_large, cost_heads, cost_head_dim);
            return 0;
        }
        RunConfig cfg = resolve_config(o);
        if (sh->parsed()) {
            std::cout << shapes_text(cfg.model);
            return 0;
        }
        if (gen->parsed()) {
            if (o.out.empty()) throw ConfigError("gen-data requires --out DIR");
            run_gen_data(cfg, o.out);
            std::cout << "dataset written to " << o.out << "\n";
            return 0;
        }
        if (tdec->parsed()) {
            if (o.out.empty()) throw ConfigError("train-decoder requires --out DIR");
            run_train_decoder(cfg, data_dir, o.out);
            std::cout << "decoder written to " << o.out << "\n";
            return 0;
        }
        if (tr->parsed()) {
            if (o.out.empty()) throw ConfigError("train requires --out DIR");
            run_train(cfg, data_dir, o.out);
            std::cout << "checkpoint written to " << o.out << "/checkpoint\n";
            return 0;
        }
        if (inf->parsed()) {
            if (o.out.empty()) throw ConfigError("infer requires --out DIR");
            InferOptions opt;
            opt.n_seeds = n_seeds;
            opt.t_inf = t_inf;
            opt.split = split;
            run_infer(cfg, data_dir, decoder_dir, ckpt_dir, o.out, opt);
            std::cout << "inference written to " << o.out << "\n";
            return 0;
        }
        if (ev->parsed()) {
            if (o.out.empty()) throw ConfigError("eval requires --out FILE");
            if (overlap_threshold >= 0.0) cfg.overlap_threshold = overlap_threshold;
            if (!overlap_basis.empty()) {
                cfg.overlap_basis =
                    overlap_basis == "pred" ? OverlapBasis::pred : OverlapBasis::gt;
            }
            run_eval(cfg, data_dir, decoder_dir, infer_dir, o.out);
            std::cout << "report written to " << o.out << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
