# -*- coding: utf-8 -*-
import numpy as np
import pandas as pd
import pytest

from core.data import (
    BenchmarkConfig,
    DomainDataset,
    DomainRole,
    FeatureKind,
    FeatureSpec,
    ShiftGroups,
    TabularSchema,
    build_shift_groups,
    compute_stats,
    decode_frame,
    default_schema,
    encode,
    gen_benchmark,
    kl_divergence,
    load_dataset,
    split_source,
    write_dataset,
)
from core.errors import (
    ConfigError,
    EmptySubsetError,
    GroupSizeError,
    InfeasibleMinorityRateError,
    LabelAccessError,
    MissingColumnError,
    NumericParseError,
    SchemaError,
    TooFewMinorityError,
    UnknownCategoryError,
    UnlabeledDatasetError,
)


def _write_csv(path, rows, header):
    path.write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n", encoding="utf-8")
    return str(path)


HEADER = ["circle", "region", "sector", "rating", "deposit", "credit", "label"]


def test_schema_rejects_duplicate_and_reserved_names():
    numeric = FeatureSpec("x", FeatureKind.NUMERIC)
    with pytest.raises(SchemaError):
        TabularSchema((numeric, numeric))
    with pytest.raises(SchemaError):
        TabularSchema((numeric, FeatureSpec("label", FeatureKind.NUMERIC)))
    with pytest.raises(SchemaError):
        TabularSchema((numeric,))


def test_schema_layout_and_widths(small_schema):
    assert small_schema.token_count == 5
    assert small_schema.encoded_width == 2 + 3 + 2 + 1 + 1
    layout = small_schema.layout()
    assert [(p.start, p.stop) for p in layout] == [(0, 2), (2, 5), (5, 7), (7, 8), (8, 9)]


def test_schema_document_round_trip(small_schema):
    again = TabularSchema.from_dict(small_schema.to_dict())
    assert again == small_schema
    assert again.digest() == small_schema.digest()


def test_default_schema_has_credit_feature_table():
    schema = default_schema()
    assert schema.token_count == 21
    assert len(schema.categorical_features) == 16
    assert len(schema.numeric_features) == 5
    assert schema.feature_names[0] == "business_scale"


def test_load_dataset_reads_labels_and_circles(tmp_path, small_schema):
    path = _write_csv(tmp_path / "data.csv", [
        ["C1", "north", "retail", "a", "10.5", "3", "0"],
        ["C2", "south", "services", "b", "-2", "4.25", "1"],
    ], HEADER)
    ds = load_dataset(path, small_schema)
    assert ds.n_rows == 2
    assert ds.training_labels().tolist() == [0, 1]
    assert ds.circles() == ["C1", "C2"]
    assert ds.raw["deposit"].tolist() == [10.5, -2.0]


def test_unknown_category_reports_row_and_column(tmp_path, small_schema):
    path = _write_csv(tmp_path / "data.csv", [
        ["C1", "north", "retail", "a", "1", "1", "0"],
        ["C1", "north", "mining", "a", "1", "1", "0"],
    ], HEADER)
    with pytest.raises(UnknownCategoryError) as info:
        load_dataset(path, small_schema)
    assert (info.value.row, info.value.column, info.value.value) == (2, "sector", "mining")


def test_numeric_parse_error(tmp_path, small_schema):
    path = _write_csv(tmp_path / "data.csv", [["C1", "north", "retail", "a", "ten", "1", "0"]], HEADER)
    with pytest.raises(NumericParseError) as info:
        load_dataset(path, small_schema)
    assert info.value.column == "deposit"


def test_missing_feature_column(tmp_path, small_schema):
    header = [h for h in HEADER if h != "credit"]
    path = _write_csv(tmp_path / "data.csv", [["C1", "north", "retail", "a", "1", "0"]], header)
    with pytest.raises(MissingColumnError):
        load_dataset(path, small_schema)


def test_missing_label_column_loads_unlabeled(tmp_path, small_schema):
    header = HEADER[:-1]
    path = _write_csv(tmp_path / "data.csv", [["C1", "north", "retail", "a", "1", "2"]], header)
    ds = load_dataset(path, small_schema, DomainRole.TARGET)
    assert ds.label_missing and not ds.has_labels
    with pytest.raises(UnlabeledDatasetError):
        ds.evaluation_labels()


def test_labels_are_guarded_by_role(small_dataset):
    target = small_dataset.with_role(DomainRole.TARGET)
    with pytest.raises(LabelAccessError):
        target.training_labels()
    assert target.evaluation_labels().sum() == 8
    synthetic = small_dataset.with_role(DomainRole.SYNTHETIC)
    with pytest.raises(LabelAccessError):
        synthetic.evaluation_labels()


def test_write_then_load_preserves_rows(tmp_path, small_dataset):
    path = str(tmp_path / "out.csv")
    write_dataset(small_dataset, path)
    again = load_dataset(path, small_dataset.schema)
    pd.testing.assert_frame_equal(again.raw, small_dataset.raw, check_exact=False, rtol=1e-12)
    assert np.array_equal(again.training_labels(), small_dataset.training_labels())


def test_encode_standardises_and_one_hots(small_dataset):
    ds = encode(small_dataset)
    x = ds.require_encoded()
    assert x.shape == (40, small_dataset.schema.encoded_width)
    assert np.allclose(x[:, 0:2].sum(axis=1), 1.0)
    assert x[:, 7].mean() == pytest.approx(0.0, abs=1e-12)
    assert x[:, 7].std() == pytest.approx(1.0, abs=1e-12)


def test_target_is_encoded_with_source_statistics(small_dataset):
    source = encode(small_dataset)
    target = encode(small_dataset.subset(range(10)), stats_source=source)
    assert target.stats == source.stats
    assert np.allclose(target.require_encoded(), source.require_encoded()[:10])


def test_decode_inverts_encode(small_dataset):
    ds = encode(small_dataset)
    decoded = decode_frame(ds.require_encoded(), ds.schema, ds.stats)
    assert decoded["sector"].tolist() == ds.raw["sector"].tolist()
    assert np.allclose(decoded["credit"], ds.raw["credit"])


def test_constant_numeric_column_encodes_to_zero(small_dataset):
    raw = small_dataset.raw.copy()
    raw["credit"] = 7.0
    ds = DomainDataset(small_dataset.schema, raw, small_dataset.circle_ids, _labels=small_dataset.training_labels())
    assert compute_stats(ds)["credit"].std == 0.0
    assert np.all(encode(ds).require_encoded()[:, 8] == 0.0)


def test_split_is_stratified_and_sorted(small_dataset):
    train, val = split_source(small_dataset, 0.75, seed=3)
    assert train.n_rows + val.n_rows == 40
    assert train.training_labels().sum() == 6
    assert val.training_labels().sum() == 2


def test_split_is_deterministic(small_dataset):
    a, _ = split_source(small_dataset, 0.8, seed=9)
    b, _ = split_source(small_dataset, 0.8, seed=9)
    pd.testing.assert_frame_equal(a.raw, b.raw)


def test_split_with_too_few_minority_rows(small_dataset):
    labels = np.zeros(40, dtype=np.int64)
    labels[0] = 1
    ds = DomainDataset(small_dataset.schema, small_dataset.raw, small_dataset.circle_ids, _labels=labels)
    with pytest.raises(TooFewMinorityError):
        split_source(ds, 0.8, seed=0)


@pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
def test_split_fraction_must_be_open_interval(small_dataset, fraction):
    with pytest.raises(ConfigError):
        split_source(small_dataset, fraction, seed=0)


def test_kl_of_identical_distribution_is_zero(small_dataset):
    assert kl_divergence(small_dataset, small_dataset) == pytest.approx(0.0, abs=1e-12)


def test_kl_grows_with_shift(small_dataset):
    shifted = small_dataset.raw.copy()
    shifted["deposit"] = shifted["deposit"] + 60.0
    moved = DomainDataset(small_dataset.schema, shifted, small_dataset.circle_ids)
    assert kl_divergence(small_dataset, moved) > kl_divergence(small_dataset, small_dataset) + 0.1


def _two_feature_domain(grades, zones, categories=("a", "b")):
    schema = TabularSchema((FeatureSpec("grade", FeatureKind.CATEGORICAL, categories),
                            FeatureSpec("zone", FeatureKind.CATEGORICAL, ("x", "y"))))
    raw = pd.DataFrame({"grade": grades, "zone": zones})
    return DomainDataset(schema, raw, np.array(["C0"] * len(raw), dtype=object))


def test_kl_closed_form_without_smoothing():
    zones = ["x", "y"] * 5
    source = _two_feature_domain(["a"] * 5 + ["b"] * 5, zones)
    target = _two_feature_domain(["a"] * 9 + ["b"], zones)
    expected = 0.9 * np.log(0.9 / 0.5) + 0.1 * np.log(0.1 / 0.5)
    assert expected == pytest.approx(0.3681, abs=1e-4)
    assert kl_divergence(source, target, smoothing=0.0) == pytest.approx(expected, abs=1e-12)


def test_kl_stays_finite_for_category_missing_from_source():
    categories = ("a", "b", "c")
    source = _two_feature_domain(["a", "b"] * 5, ["x"] * 10, categories)
    target = _two_feature_domain(["c"] * 4 + ["a"], ["y"] * 5, categories)
    value = kl_divergence(source, target)
    assert np.isfinite(value) and value > 0.0


def test_kl_of_empty_subset(small_dataset):
    with pytest.raises(EmptySubsetError):
        kl_divergence(small_dataset, small_dataset.subset([]))


def test_shift_groups_are_nested_with_non_decreasing_mean_kl(benchmark_domains):
    source, target = benchmark_domains
    groups = build_shift_groups(source, target, group_sizes=(10, 8, 6, 4, 2, 1), max_workers=2)
    sizes = [g.size for g in groups.groups]
    assert sizes == [10, 8, 6, 4, 2, 1]
    for bigger, smaller in zip(groups.groups, groups.groups[1:]):
        assert set(smaller.circle_ids) <= set(bigger.circle_ids)
        assert smaller.mean_kl >= bigger.mean_kl
    kls = [c.kl for c in groups.circles]
    assert kls == sorted(kls, reverse=True)


def test_shift_groups_round_trip(tmp_path, benchmark_domains):
    source, target = benchmark_domains
    groups = build_shift_groups(source, target, group_sizes=(5, 2), max_workers=1)
    again = ShiftGroups.from_dict(groups.to_dict())
    assert again == groups


def test_group_larger_than_circle_count(benchmark_domains):
    source, target = benchmark_domains
    with pytest.raises(GroupSizeError):
        build_shift_groups(source, target, group_sizes=(11,))


def test_benchmark_matches_requested_sizes_and_rates(benchmark_domains):
    source, target = benchmark_domains
    assert source.n_rows == 120 and target.n_rows == 100
    assert len(source.circles()) == 4 and len(target.circles()) == 10
    assert source.training_labels().sum() == 16
    assert target.evaluation_labels().sum() == 11
    assert source.schema == default_schema()


def test_benchmark_is_deterministic(small_benchmark_config):
    a_source, a_target = gen_benchmark(small_benchmark_config)
    b_source, b_target = gen_benchmark(small_benchmark_config)
    pd.testing.assert_frame_equal(a_source.raw, b_source.raw)
    pd.testing.assert_frame_equal(a_target.raw, b_target.raw)


def test_benchmark_custom_feature_counts():
    source, _ = gen_benchmark(BenchmarkConfig(n_categorical=3, n_numeric=2, source_circles=2,
                                              target_circles=2, source_samples_per_circle=20,
                                              target_samples_per_circle=20))
    assert source.schema.feature_names == ["cat_00", "cat_01", "cat_02", "num_00", "num_01"]


def test_benchmark_rejects_infeasible_rate():
    with pytest.raises(InfeasibleMinorityRateError):
        BenchmarkConfig(source_minority_rate=0.0)
    with pytest.raises(InfeasibleMinorityRateError):
        gen_benchmark(BenchmarkConfig(source_circles=1, source_samples_per_circle=3, source_minority_rate=0.01))


def _mean_circle_kl(intensity, seed):
    source, target = gen_benchmark(BenchmarkConfig(source_circles=4, target_circles=8, source_samples_per_circle=100,
                                                   target_samples_per_circle=50, shift_intensity=intensity,
                                                   seed=seed))
    groups = build_shift_groups(source, target, group_sizes=(8,), max_workers=1)
    return float(np.mean([c.kl for c in groups.circles]))


def test_higher_shift_intensity_raises_circle_kl_across_seeds():
    wins = sum(_mean_circle_kl(2.0, seed) > _mean_circle_kl(0.5, seed) for seed in range(10))
    assert wins >= 9


def test_default_benchmark_yields_six_nested_groups():
    source, target = gen_benchmark(BenchmarkConfig(seed=0))
    groups = build_shift_groups(source, target, max_workers=1)
    assert [g.size for g in groups.groups] == [80, 60, 40, 30, 20, 10]
    means = [g.mean_kl for g in groups.groups]
    assert means == sorted(means)
