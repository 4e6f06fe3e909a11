#pragma once

namespace pvrnn {

template <class P, class F>
void Parameters::visit(P& p, F& f) {
    auto emit = [&f](const std::string& name, auto& m) {
        if (!m.empty()) f(name, m);
    };
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        auto& l = p.layers[k];
        const std::string prefix = "l" + std::to_string(k) + ".";
        emit(prefix + "w_dd", l.w_dd);
        emit(prefix + "w_dz", l.w_dz);
        emit(prefix + "w_above", l.w_above);
        emit(prefix + "w_below", l.w_below);
        emit(prefix + "b", l.b);
        emit(prefix + "prior_mu_w", l.prior_mu_w);
        emit(prefix + "prior_mu_b", l.prior_mu_b);
        emit(prefix + "prior_sigma_w", l.prior_sigma_w);
        emit(prefix + "prior_sigma_b", l.prior_sigma_b);
        emit(prefix + "post_mu_w", l.post_mu_w);
        emit(prefix + "post_sigma_w", l.post_sigma_w);
        emit(prefix + "post_mu_x", l.post_mu_x);
        emit(prefix + "post_sigma_x", l.post_sigma_x);
        emit(prefix + "post_mu_b", l.post_mu_b);
        emit(prefix + "post_sigma_b", l.post_sigma_b);
    }
    emit("out.w_d", p.out_w_d);
    emit("out.w_z", p.out_w_z);
    emit("out.b", p.out_b);
    emit("in.w_u", p.in_w_u);
}

}  // namespace pvrnn
