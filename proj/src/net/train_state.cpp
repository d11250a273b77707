/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/net/trainer.hpp"

#include "json.hpp"

#include <fstream>

namespace pat::net {

void train_state_save(const TrainState& st, const std::string& path) {
    nlohmann::json j;
    j["epoch"] = st.epoch;
    j["adam_steps"] = st.adamSteps;
    j["lr"] = st.lr;
    j["best_val_psnr"] = st.bestValPsnr;
    j["best_epoch"] = st.bestEpoch;
    j["seed"] = st.seed;
    j["aborted"] = st.aborted;
    j["val_psnr_history"] = st.valPsnrHistory;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("train state: cannot open for writing: " + path);
    f << j.dump(2) << '\n';
}

TrainState train_state_load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("train state: cannot open: " + path);
    nlohmann::json j;
    f >> j;
    TrainState st;
    st.epoch = j.at("epoch").get<int>();
    st.adamSteps = j.at("adam_steps").get<std::uint64_t>();
    st.lr = j.at("lr").get<double>();
    st.bestValPsnr = j.at("best_val_psnr").is_number() ? j.at("best_val_psnr").get<double>()
                                                       : -std::numeric_limits<double>::infinity();
    st.bestEpoch = j.at("best_epoch").get<int>();
    st.seed = j.at("seed").get<std::uint64_t>();
    st.aborted = j.at("aborted").get<bool>();
    if (j.contains("val_psnr_history"))
        st.valPsnrHistory = j.at("val_psnr_history").get<std::vector<double>>();
    return st;
}

} // namespace pat::net
