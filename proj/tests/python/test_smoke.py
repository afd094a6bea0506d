"""Sanity checks for the compiled extension: one happy path per submodule."""

import math

import lastmile
from lastmile import Matrix, baselines, cluster, conformal, embed, geo, ingest, metrics
from lastmile import eval as ev


def check_geo():
    tess = geo.Tessellation("turin", geo.GeoPoint(45.07, 7.69))
    ring = geo.k_ring(geo.HexCellId(0, 0, "turin"), 3)
    assert len(ring) == 37
    assert len(set((c.q, c.r) for c in ring)) == 37
    cell = geo.point_to_cell(tess, geo.GeoPoint(45.075, 7.701))
    assert geo.point_to_cell(tess, geo.cell_center(tess, cell)) == cell
    assert len(geo.cell_polygon(tess, cell)) == 6


def check_baselines():
    z90 = baselines.inv_norm_cdf(0.9)
    assert abs(z90 - 1.2815515655446004) < 1e-12
    xs = [float(i) for i in range(1, 11)] + [102.0]
    xs += [float(v) for v in range(103, 110)] + [314.0, 400.0, 500.0]
    fit = baselines.fit_quantile_match(xs, 0.5, 0.9)
    assert abs(fit.mu - math.log(102.0)) < 1e-12
    assert abs(fit.sigma - (math.log(314.0) - math.log(102.0)) / z90) < 1e-12
    assert abs(fit.quantile(0.9) - 314.0) < 1e-9


def check_metrics():
    assert abs(metrics.pinball(10.0, 8.0, 0.5) - 1.0) < 1e-15
    assert abs(metrics.crps_step([0.0, 1.0], 1.0) - 0.25) < 1e-12
    kw = metrics.kruskal_wallis([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
    assert abs(kw.h - 7.2) < 1e-12
    assert abs(kw.p_value - math.exp(-3.6)) < 1e-12


def check_embed():
    assert embed.patch_size(1) == 7
    assert abs(embed.location_weight(0, 1) - 0.25) < 1e-15
    want = math.log(2.0) - 3.0 * math.log(2.0) + 2.0 + math.log(6.0)
    assert abs(embed.zip_nll(0.0, math.log(2.0), 3) - want) < 1e-10


def check_conformal():
    rows, ys = [], []
    for g in range(5):
        for j in range(60):
            rows.append([10.0 * (g + 1)])
            ys.append(10.0 * (g + 1) + 100.0 * g + j)
    model = conformal.CpsModel.calibrate(lambda x: x[0], Matrix(rows), ys)
    assert model.n_categories() == 5
    dist = model.predict_from_score(10.0)
    assert dist.quantile(0.5) == 40.0
    lo, hi = dist.interval(0.9)  # residuals of bin 0 are 0..59
    assert (lo, hi) == (13.0, 67.0)
    assert dist.point == 10.0


def check_cluster():
    pts = Matrix([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.2, 10.0]])
    dend = cluster.agglomerate(pts, 2)
    assert dend.labels == [0, 0, 1, 1]


def check_pipeline():
    cfg = ingest.SynthConfig()
    cfg.city_id = "pytown"
    cfg.n_cells = 30
    cfg.n_deliveries = 450
    cfg.seed = 3
    city = ingest.synth_city(cfg)
    assert len(city.features.cells) == 30
    assert len(city.deliveries) == 450

    enc_cfg = embed.EncoderConfig()
    enc_cfg.n_tags = len(city.features.vocab)
    enc_cfg.radius = 2
    params = embed.EncoderParams(enc_cfg, seed=7)
    embs = embed.embed_cells(params, city.features)
    assert len(embs.cells) == 30

    corpus = ev.Corpus()
    corpus.add_city(ev.CityData(city.features, embs, city.deliveries))
    exp = ev.ExperimentConfig()
    exp.target_city = "pytown"
    exp.model = "city"
    exp.k_folds = 3
    report = ev.run_experiment(corpus, exp)
    assert report.n_folds == 3
    assert len(report.fold_crps) == 3
    assert report.crps.mean > 0.0
    assert 0.0 <= report.coverage.mean <= 1.0


def main():
    checks = [
        check_geo,
        check_baselines,
        check_metrics,
        check_embed,
        check_conformal,
        check_cluster,
        check_pipeline,
    ]
    for check in checks:
        check()
        print(f"ok {check.__name__}")
    print(f"{len(checks)} smoke checks passed ({lastmile.__version__})")


if __name__ == "__main__":
    main()
