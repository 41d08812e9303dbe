"""Smoke tests for the Python bindings."""

import pytest

import fedcac


def small_config(seed=7):
    config = fedcac.RunConfig()
    config.num_clients = 4
    config.rounds = 3
    config.epochs = 2
    config.tau = 0.5
    config.beta = 2.0
    config.lr = 0.05
    config.batch_size = 20
    config.data.num_classes = 4
    config.data.dims = 6
    config.data.samples_per_class = 300
    config.data.separation = 2.0
    config.partition.mode = fedcac.PartitionMode.PATHOLOGICAL
    config.partition.classes_per_client = 2
    config.partition.train_per_client = 40
    config.partition.test_per_client = 20
    config.model.layer_widths = [6, 8, 4]
    config.seed = seed
    return config


def test_run_round_loop_and_determinism():
    result = fedcac.run(small_config())
    history = result["history"]
    assert len(history) == 3
    for t, row in enumerate(history, start=1):
        assert row["round"] == t
        assert 0.0 <= row["mean_accuracy"] <= 1.0
        assert len(row["per_client_accuracy"]) == 4
        assert row["mean_accuracy"] == pytest.approx(
            sum(row["per_client_accuracy"]) / 4.0, abs=0.0
        )
    assert result["best_accuracy"] == max(r["mean_accuracy"] for r in history)

    again = fedcac.run(small_config())
    assert [r["mean_accuracy"] for r in again["history"]] == [
        r["mean_accuracy"] for r in history
    ]

    other = fedcac.run(small_config(seed=8))
    assert [r["mean_accuracy"] for r in other["history"]] != [
        r["mean_accuracy"] for r in history
    ]


def test_collaboration_shrinks_past_beta():
    result = fedcac.run(small_config())
    last = result["history"][-1]
    assert last["mean_collab_size"] == 0.0  # round 3 > beta = 2
    assert "threshold" in last


def test_blobs_and_partition():
    data = fedcac.generate_blobs(4, 6, 50, 2.0, seed=3)
    assert len(data) == 200
    assert data.num_classes == 4

    spec = fedcac.PartitionSpec()
    spec.mode = fedcac.PartitionMode.PATHOLOGICAL
    spec.num_clients = 2
    spec.classes_per_client = 2
    spec.train_per_client = 60
    spec.test_per_client = 20
    spec.seed = 1
    shards = fedcac.make_partition(data, spec)
    assert len(shards) == 2
    for shard in shards:
        assert len(set(shard.train.labels)) == 2
        assert len(shard.train.labels) == 60
        assert len(shard.test.labels) == 20


def test_mask_wire_format_round_trip():
    mask = fedcac.mask_from_bits([[1] * 10, [0, 1, 0]], tau=0.5)
    payload = fedcac.serialize_mask(mask)
    assert isinstance(payload, bytes)
    # header: layer count + two lengths = 12 bytes, then ten set bits LSB first
    assert payload[12] == 0xFF and payload[13] == 0x03
    back = fedcac.deserialize_mask(payload)
    assert back.bits_equal(mask)
    assert back.popcount() == 11

    with pytest.raises(fedcac.SerializationError):
        fedcac.deserialize_mask(payload[:-1])


def test_overlap_and_threshold():
    a = fedcac.mask_from_bits([[1, 1, 0, 0]])
    b = fedcac.mask_from_bits([[0, 0, 1, 1]])
    assert fedcac.overlap_ratio(a, a) == 1.0
    assert fedcac.overlap_ratio(a, b) == 0.5

    overlap = [[1.0, 0.9, 0.6], [0.9, 1.0, 0.7], [0.6, 0.7, 1.0]]
    o_avg, o_max, threshold = fedcac.compute_threshold(overlap, round=8, beta=8.0)
    assert o_max == 0.9
    assert threshold == o_max
    sets = fedcac.select_collaborators(overlap, 0.7)
    assert sets == [[1], [0, 2], [1]]
    top1 = fedcac.fixed_number_collaborators(overlap, 1)
    assert top1 == [[1], [0], [1]]


def test_config_validation_raises():
    config = small_config()
    config.tau = 2.0
    with pytest.raises(fedcac.ConfigError):
        fedcac.run(config)
