#include <cmath>
#include <vector>

#include "fzrisk/estimation.hpp"
#include "fzrisk/models.hpp"

namespace fzrisk {

ArmaGarchModel armagarch_fit(std::span<const double> y, InnovationDist dist,
                             AlphaLevel alpha) {
    EstimationResult q = qmle_garch(y);
    ArmaGarchModel m;
    m.mu = q.mu;
    m.garch = GarchParams{q.theta[0], q.theta[1], q.theta[2]};
    m.sigma2_init = q.state.sigma2_init;
    m.dist = dist;

    std::vector<double> demeaned(y.begin(), y.end());
    for (double& x : demeaned) x -= m.mu;
    std::vector<double> sigma2 = garch_variance_path(demeaned, m.garch, m.sigma2_init);
    std::vector<double> resid(demeaned.size());
    for (size_t t = 0; t < resid.size(); ++t)
        resid[t] = demeaned[t] / std::sqrt(sigma2[t]);

    switch (dist) {
        case InnovationDist::Normal:
            m.tail = normal_tail_pair(alpha);
            break;
        case InnovationDist::Edf:
            m.tail = edf_tail_pair(resid, alpha);
            break;
        case InnovationDist::SkewT:
            m.skewt = skewt_fit(resid);
            m.tail = skewt_tail_pair(alpha, m.skewt);
            break;
    }
    return m;
}

RiskPath armagarch_apply(const ArmaGarchModel& model, std::span<const double> y) {
    std::vector<double> demeaned(y.begin(), y.end());
    for (double& x : demeaned) x -= model.mu;
    std::vector<double> sigma2 =
        garch_variance_path(demeaned, model.garch, model.sigma2_init);
    RiskPath path;
    path.v.resize(y.size());
    path.e.resize(y.size());
    for (size_t t = 0; t < y.size(); ++t) {
        double s = std::sqrt(sigma2[t]);
        path.v[t] = model.mu + model.tail.a * s;
        path.e[t] = model.mu + model.tail.b * s;
    }
    validate(path); // a large positive mean can push v past zero
    return path;
}

RiskPath armagarch_forecast(std::span<const double> y, InnovationDist dist,
                            AlphaLevel alpha) {
    return armagarch_apply(armagarch_fit(y, dist, alpha), y);
}

} // namespace fzrisk
