#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "svgpkan/adam.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/metrics.hpp"

namespace svgpkan::runio {

inline std::string config_text(const RunConfig& cfg) {
    std::string s;
    for (const auto& [k, v] : config_kv(cfg)) s += k + "=" + v + "\n";
    return s;
}

inline void prepare_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_kv(cfg.out_dir + "/config.txt", config_kv(cfg));
}

class LossCsv {
  public:
    explicit LossCsv(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for write");
        out_ << "epoch,loss\n";
    }
    void row(i64 epoch, double loss) { out_ << epoch << "," << fmt_g17(loss) << "\n"; }

  private:
    std::ofstream out_;
};

// One optimizer step with the usual hygiene: the update is skipped outright
// when any gradient entry is non-finite (returns false), and the global
// gradient norm is clipped to `clip_norm` when positive. Params flagged in
// `frozen` contribute zero gradient, which leaves their Adam moments at rest.
inline bool step_adam(Adam& opt, Tape& tape, double clip_norm = 0.0,
                      const std::vector<bool>* frozen = nullptr) {
    std::vector<Tensor> grads;
    grads.reserve(opt.params().size());
    for (Param* p : opt.params()) grads.push_back(tape.grad(*p));
    if (frozen)
        for (size_t i = 0; i < grads.size(); ++i)
            if ((*frozen)[i]) grads[i] = Tensor::zeros(grads[i].shape());
    double n2 = 0.0;
    for (const Tensor& g : grads) {
        const double* d = g.data();
        for (i64 i = 0; i < g.size(); ++i) n2 += d[i] * d[i];
    }
    if (!std::isfinite(n2)) return false;
    if (clip_norm > 0.0 && n2 > clip_norm * clip_norm) {
        const double s = clip_norm / std::sqrt(n2);
        for (Tensor& g : grads) {
            double* d = g.mutable_data();
            for (i64 i = 0; i < g.size(); ++i) d[i] *= s;
        }
    }
    opt.step(grads);
    return true;
}

inline void save_net_checkpoint(const std::string& path, const RunConfig& cfg, std::uint64_t step,
                                const std::vector<Param*>& state) {
    Checkpoint c;
    c.step = step;
    c.config_text = config_text(cfg);
    capture_params(c, state);
    save_checkpoint(path, c);
}

}  // namespace svgpkan::runio
