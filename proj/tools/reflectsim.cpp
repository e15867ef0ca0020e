#include <iostream>

#include <CLI11.hpp>

#include "reflectsim/harness/commands.hpp"

using namespace reflectsim::harness;

namespace {

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config, "experiment config file")->check(CLI::ExistingFile);
    cmd->add_option("--profile", a.profile, "desk | full");
    cmd->add_option("--out", a.out, "output directory (default: $REFLECTSIM_OUT/<command>...)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reflectsim: focal-point control of reflector arrays"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a controller");
    add_common(t, train);
    t->add_option("--algo", train.algo, "beam_focusing_ma | beam_focusing_sa | column_based_ma");
    t->add_option("--episodes", train.episodes);
    t->add_option("--seed", train.seed);

    EvaluateArgs eval;
    auto* e = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_common(e, eval);
    e->add_option("--checkpoint", eval.checkpoint)->required();
    e->add_option("--steps", eval.steps);
    e->add_option("--noise-sigma", eval.noise_sigma, "localisation noise (m)");
    e->add_option("--seed", eval.seed);

    HeatmapArgs heat;
    auto* h = app.add_subcommand("heatmap", "RSSI map of a checkpoint or static reflector");
    add_common(h, heat);
    h->add_option("--checkpoint", heat.checkpoint);
    h->add_option("--static", heat.static_kind, "flat | none");
    h->add_option("--resolution", heat.resolution, "N or WxH");
    h->add_option("--region", heat.region, "x0,y0,x1,y1")->delimiter(',')->expected(4);
    h->add_option("--seed", heat.seed);
    h->add_option("--settle-steps", heat.settle_steps);

    CompareArgs cmp;
    auto* c = app.add_subcommand("compare", "train and evaluate every arm on shared seeds");
    add_common(c, cmp);
    c->add_option("--seeds", cmp.seeds, "comma separated")->delimiter(',');
    c->add_option("--episodes", cmp.episodes);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    }

    if (t->parsed()) return run_train(train, std::cout, std::cerr);
    if (e->parsed()) return run_evaluate(eval, std::cout, std::cerr);
    if (h->parsed()) return run_heatmap(heat, std::cout, std::cerr);
    return run_compare(cmp, std::cout, std::cerr);
}
