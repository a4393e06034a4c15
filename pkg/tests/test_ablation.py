import csv

from codecontrast.ablation import RUNGS, AblationConfig, AblationResult, SeedResult, config_dict, config_from_dict


def fake_result(rows):
    res = AblationResult(AblationConfig(seeds=tuple(range(len(rows)))))
    for seed, (mrr, code) in enumerate(rows):
        res.seeds.append(SeedResult(seed, dict(zip(RUNGS, mrr)), dict(zip(("asst", "ict_token"), code)), 1.0))
    return res


def test_medians_and_checks():
    res = fake_result([
        ((0.5, 0.6, 0.7, 0.8), (0.3, 0.2)),
        ((0.4, 0.3, 0.9, 0.6), (0.1, 0.4)),
        ((0.6, 0.7, 0.5, 0.9), (0.5, 0.1)),
    ])
    assert res.median_mrr() == {"warmup_only": 0.5, "asst": 0.6, "asst_comment": 0.7, "soft_labeled": 0.8}
    assert res.median_code_map() == {"asst": 0.3, "ict_token": 0.2}
    assert all(res.checks().values())


def test_checks_flag_each_failure():
    res = fake_result([((0.5, 0.49, 0.6, 0.51), (0.1, 0.2))])
    c = res.checks()
    assert not c["warmup_only<=asst"]
    assert c["asst<=asst_comment"]
    assert not c["asst_comment<=soft_labeled"]
    assert not c["soft_labeled-warmup_only>=0.02"]
    assert not c["asst>=ict_token(code MAP)"]


def test_write_csv(tmp_path):
    res = fake_result([((0.5, 0.6, 0.7, 0.8), (0.3, 0.2))])
    rows = list(csv.DictReader(res.write(tmp_path).open()))
    assert len(rows) == 2 * (len(RUNGS) + 2)
    assert rows[0] == {"seed": "0", "measure": "heldout_mrr", "variant": "warmup_only", "score": "0.5"}
    assert rows[-1]["seed"] == "median"


def test_config_dict_round_trip():
    cfg = AblationConfig(seeds=(4, 5), dual_steps=7)
    assert config_from_dict(config_dict(cfg)) == cfg
