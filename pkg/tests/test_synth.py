import numpy as np
import pytest

from mfsb.core.composition import candidate_set, generate_space, make_split
from mfsb.core.synth import (
    build_generator,
    latent_sum_oracle,
    materialize_dataset,
    oracle_accuracy,
    read_dataset,
    synthesize_sample,
    write_dataset,
)
from mfsb.utils.errors import ConfigError


class TestGenerator:
    def test_unit_rows(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=0)
        np.testing.assert_allclose(np.linalg.norm(gen.latent_state, axis=1), np.ones(8))
        np.testing.assert_allclose(np.linalg.norm(gen.latent_object, axis=1), np.ones(10))

    def test_seeds_differ(self, space_8x10):
        a = build_generator(space_8x10, 32, seed=0)
        b = build_generator(space_8x10, 32, seed=1)
        assert not np.allclose(a.latent_state, b.latent_state)

    def test_minimum_width(self, space_8x10):
        with pytest.raises(ConfigError):
            build_generator(space_8x10, 4, seed=0)


class TestSynthesizeSample:
    def test_noise_free_is_normalized_sum(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=0)
        sample = synthesize_sample((2, 3), gen, seed=9, noise_sigma=0.0)
        expected = gen.latent_state[2] + gen.latent_object[3]
        np.testing.assert_allclose(sample.features, expected / np.linalg.norm(expected))

    def test_deterministic(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=0)
        a = synthesize_sample((1, 1), gen, seed=4, sample_id=12)
        b = synthesize_sample((1, 1), gen, seed=4, sample_id=12)
        np.testing.assert_array_equal(a.features, b.features)

    def test_sample_ids_draw_fresh_noise(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=0)
        a = synthesize_sample((1, 1), gen, seed=4, sample_id=0)
        b = synthesize_sample((1, 1), gen, seed=4, sample_id=1)
        assert not np.array_equal(a.features, b.features)

    def test_negative_sigma(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=0)
        with pytest.raises(ConfigError):
            synthesize_sample((0, 0), gen, seed=0, noise_sigma=-0.1)


class TestDataset:
    def test_train_size(self, split_8x10, dataset_8x10):
        _, data = dataset_8x10
        assert len(data.train) == 10 * len(split_8x10.seen)
        assert len(data.test) == 5 * (len(split_8x10.seen) + len(split_8x10.test_unseen))

    def test_train_holds_seen_pairs_only(self, space_8x10, split_8x10, dataset_8x10):
        _, data = dataset_8x10
        assert set(data.pair_ids("train", space_8x10)) <= split_8x10.seen

    def test_file_round_trip_is_bit_exact(self, tmp_path, space_8x10, dataset_8x10):
        _, data = dataset_8x10
        path = write_dataset(data, space_8x10, tmp_path / "data.tsv")
        assert path.read_text().startswith(f"# mfsb-dataset n={len(data)} d_in=32 sigma=0.1 seed=11\n")
        back = read_dataset(path, space_8x10)
        for phase in ("train", "val", "test"):
            np.testing.assert_array_equal(back.features(phase), data.features(phase))
            assert [s.pair for s in back.samples(phase)] == [s.pair for s in data.samples(phase)]
        assert back.noise_sigma == 0.1

    def test_rejects_foreign_file(self, tmp_path, space_8x10):
        path = tmp_path / "other.tsv"
        path.write_text("a\tb\n1\t2\n")
        with pytest.raises(ConfigError):
            read_dataset(path, space_8x10)


class TestLatentSumOracle:
    def test_solves_low_noise_task(self):
        space = generate_space(8, 10)
        split = make_split(space, 0.3, 10, seed=3)
        gen = build_generator(space, 32, seed=5, noise_sigma=0.05)
        data = materialize_dataset(space, split, gen, 0.05, seed=6)
        assert oracle_accuracy(data, gen, space, candidate_set(space, split, "open")) > 0.9

    def test_noise_free_is_exact(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=2)
        pairs = [(s, o) for s in range(8) for o in range(10)]
        x = np.stack([synthesize_sample(p, gen, seed=0, noise_sigma=0.0).features for p in pairs])
        predicted = latent_sum_oracle(x, gen, space_8x10, range(80))
        np.testing.assert_array_equal(predicted, np.arange(80))

    def test_empty_candidates(self, space_8x10):
        gen = build_generator(space_8x10, 32, seed=2)
        with pytest.raises(ConfigError):
            latent_sum_oracle(np.ones((1, 32)), gen, space_8x10, [])


@pytest.mark.parametrize("seed", range(5))
def test_latent_rows_are_not_collinear(seed):
    gen = build_generator(generate_space(32, 32), 16, seed=seed)
    for latent in (gen.latent_state, gen.latent_object):
        cosines = np.abs(latent @ latent.T)[np.triu_indices(len(latent), k=1)]
        assert cosines.max() < 0.9


def test_oracle_accuracy_never_rises_with_noise():
    space = generate_space(8, 10)
    split = make_split(space, 0.3, 10, seed=3, eval_samples_per_pair=20)
    gen = build_generator(space, 32, seed=5)
    candidates = candidate_set(space, split, "open")
    accuracies = [
        oracle_accuracy(materialize_dataset(space, split, gen, sigma, seed=6), gen, space, candidates)
        for sigma in (0.0, 0.05, 0.2, 0.5)
    ]
    assert accuracies[0] == 1.0
    assert all(later <= earlier for earlier, later in zip(accuracies, accuracies[1:])), accuracies
