import copy
import json

import numpy as np
import pytest

from ota_assign.scenefile import SceneFormatError, load_scene, parse_scene

DOC = {
    "image_size": [100, 50],
    "gts": [{"box": [10, 10, 30, 40], "label": 1}],
    "preds": [
        {"box": [10, 10, 30, 40], "scores": [0.1, 0.9]},
        {"box": [50, 0, 100, 50], "scores": [0.2, 0.1]},
    ],
}


def test_parse_and_normalize():
    scene = parse_scene(DOC)
    gts, labels, preds, scores = scene.normalized()
    np.testing.assert_allclose(gts.xyxy, [[0.1, 0.2, 0.3, 0.8]])
    np.testing.assert_allclose(preds.xyxy[1], [0.5, 0.0, 1.0, 1.0])
    assert labels.tolist() == [1] and scores.shape == (2, 2)
    assert gts.units == "normalized"
    assert scene.to_json() == DOC


def test_empty_gts_allowed():
    doc = copy.deepcopy(DOC)
    doc["gts"] = []
    assert len(parse_scene(doc).gt_boxes) == 0


def mutate(path, value):
    doc = copy.deepcopy(DOC)
    target = doc
    for key in path[:-1]:
        target = target[key]
    if value is KeyError:
        del target[path[-1]]
    else:
        target[path[-1]] = value
    return doc


@pytest.mark.parametrize(
    "path, value, fragment",
    [
        (("gts",), KeyError, "gts"),
        (("image_size",), [100], "image_size"),
        (("image_size",), [0, 10], "image_size"),
        (("gts", 0, "box"), [1, 2, 3], r"gts\[0\]\.box"),
        (("gts", 0, "box"), [30, 10, 10, 40], r"gts\[0\]\.box"),
        (("gts", 0, "label"), -1, r"gts\[0\]\.label"),
        (("gts", 0, "label"), 2, r"gts\[0\]\.label"),
        (("preds", 1, "scores"), [0.2], r"preds\[1\]\.scores"),
        (("preds", 1, "scores"), [0.2, 1.5], r"preds\[1\]\.scores"),
        (("preds", 0, "box"), [0, 0, "a", 1], r"preds\[0\]\.box\[2\]"),
        (("preds",), [], "preds"),
    ],
)
def test_errors_name_the_field(path, value, fragment):
    with pytest.raises(SceneFormatError, match=fragment):
        parse_scene(mutate(path, value))


def test_load_scene(tmp_path):
    good = tmp_path / "scene.json"
    good.write_text(json.dumps(DOC))
    assert len(load_scene(good).pred_boxes) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SceneFormatError, match="invalid JSON"):
        load_scene(bad)
