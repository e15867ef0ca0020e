// A few episodes of multi-agent training followed by a deterministic
// evaluation; the checkpoint lands in the working directory.

#include <cstdio>
#include <fstream>

#include "reflectsim/harness/config.hpp"
#include "reflectsim/marl.hpp"

int main(int argc, char** argv) {
    using namespace reflectsim;
    auto cfg = harness::default_config();
    cfg.ppo.episodes = argc > 1 ? std::atoi(argv[1]) : 20;
    const World w = harness::build_world(cfg);

    TrainOptions opts;
    opts.hyper = cfg.ppo;
    opts.seed = 1;
    opts.eval_every = 10;
    opts.on_episode = [](const EpisodeLog& e) {
        double r = 0;
        for (double x : e.cumulative_reward) r += x;
        std::printf("episode %3lld  reward %8.3f\n", static_cast<long long>(e.episode), r / e.cumulative_reward.size());
    };
    const auto result = train(w, cfg.env, opts);
    for (const auto& s : result.snapshots)
        std::printf("after %lld episodes: eval %.2f dBm\n", static_cast<long long>(s.episode), s.mean_rssi_dbm);

    EvalOptions eo;
    eo.seed = 7;
    std::printf("policy %.2f dBm, analytic focus %.2f dBm, flat %.2f dBm\n",
                evaluate(result.state, w, cfg.env, eo).mean(), evaluate_analytic(w, cfg.env, eo).mean(),
                evaluate_static(BaselineKind::flat, w, cfg.env, eo).mean());

    std::ofstream out("sample.ckpt");
    save_checkpoint(out, result.state);
    std::printf("checkpoint written to sample.ckpt\n");
}
