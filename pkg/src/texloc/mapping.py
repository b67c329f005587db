"""Reference map construction, lookup, and persistence.

Mapping extracts features from reference images with known poses and stores
them in the map frame. The nearest variant keeps projected real descriptors
(the projection is fitted on the map's own descriptors and saved with it);
the identity variant keeps truncated bit strings, organized per image so
localization can restrict matching to a pose prior's neighbourhood.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import ParameterConfig, config_fingerprint
from .errors import (
    EmptyInputError,
    FingerprintMismatchError,
    ImageIoError,
    VersionMismatchError,
)
from .features import (
    Feature,
    Keypoint,
    NNIndex,
    Projection,
    describe_binary,
    describe_real,
    detect_keypoints,
    fit_projection,
    pack_bits,
    project,
    subsample_features,
)
from .geometry import Pose2D, transform_point, wrap_angle
from .imaging import GrayImage

_MAGIC = b"TXLMAP1\n"
_VERSION = 1


@dataclass
class MapImage:
    """One reference image's contribution to the map."""

    image_id: int
    pose: Pose2D
    width: int
    height: int
    features: list  # list[Feature], keypoints in the map frame
    feature_id_offset: int = 0
    _sorted_keys: np.ndarray = field(default=None, repr=False)
    _key_order: np.ndarray = field(default=None, repr=False)

    @property
    def center(self) -> tuple[float, float]:
        return transform_point(self.pose, (self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def identity_key_table(self):
        """Sorted packed descriptor keys plus the order mapping (lazy)."""
        if self._sorted_keys is None:
            if self.features:
                keys = pack_bits(np.vstack([f.descriptor for f in self.features]))
            else:
                keys = np.empty(0, dtype=np.int64)
            order = np.argsort(keys, kind="stable")
            self._sorted_keys = keys[order]
            self._key_order = order
        return self._sorted_keys, self._key_order


@dataclass
class ReferenceMap:
    images: list
    matching_variant: str
    fingerprint: str
    subsample_seed: int = 0
    projection: Projection | None = None
    _nn_index: NNIndex | None = field(default=None, repr=False)

    @property
    def num_features(self) -> int:
        return sum(len(im.features) for im in self.images)

    def image_by_id(self, image_id: int) -> MapImage:
        for im in self.images:
            if im.image_id == image_id:
                return im
        raise KeyError(f"no reference image with id {image_id}")

    def nn_index(self) -> NNIndex:
        """Global exact-NN index over all reference features (lazy)."""
        if self._nn_index is None:
            feats, ids = [], []
            for im in self.images:
                feats.extend(im.features)
                ids.extend(range(im.feature_id_offset, im.feature_id_offset + len(im.features)))
            self._nn_index = NNIndex(feats, ids=ids)
        return self._nn_index

    def feature_by_global_id(self, gid: int) -> Feature:
        for im in self.images:
            if im.feature_id_offset <= gid < im.feature_id_offset + len(im.features):
                return im.features[gid - im.feature_id_offset]
        raise KeyError(f"no feature with global id {gid}")


def extract_image_features(
    image: GrayImage, config: ParameterConfig, subsample_seed=0
) -> list[Feature]:
    """Image-frame features for one reference image under ``config``.

    For the nearest variant this returns raw (unprojected) real descriptors;
    projection happens during map assembly so it can be fitted on the whole
    map. For the identity variant the bit descriptors are final.
    """
    if config.matching_variant == "nearest":
        kps = detect_keypoints(image, config.detector_params(), max_count=None)
        kps = subsample_features(kps, config.reference_feature_cap, seed=subsample_seed)
        return describe_real(image, kps)
    kps = detect_keypoints(image, config.detector_params(), max_count=config.reference_feature_cap)
    return describe_binary(image, kps, config.descriptor_params())


def _to_map_frame(features: list[Feature], pose: Pose2D) -> list[Feature]:
    out = []
    for f in features:
        k = f.keypoint
        mx, my = transform_point(pose, k.x, k.y)
        out.append(
            Feature(
                Keypoint(mx, my, wrap_angle(k.orientation + pose.theta), k.size, k.response),
                f.descriptor,
                f.kind,
            )
        )
    return out


def assemble_map(
    entries: list,
    config: ParameterConfig,
    subsample_seed: int = 0,
) -> ReferenceMap:
    """Build a ReferenceMap from prepared (id, pose, w, h, features) entries.

    ``features`` are image-frame features from extract_image_features. Used
    directly by evaluation code that caches per-image extractions; normal
    callers go through build_map.
    """
    if not entries:
        raise EmptyInputError("cannot build a map from zero images")
    projection = None
    if config.matching_variant == "nearest":
        all_desc = [f.descriptor for (_, _, _, _, feats) in entries for f in feats]
        if not all_desc:
            raise EmptyInputError("no descriptors available to fit the map projection")
        projection = fit_projection(np.vstack(all_desc), config.pca_dim)

    images = []
    offset = 0
    for image_id, pose, width, height, feats in entries:
        if projection is not None and feats:
            mat = project(projection, np.vstack([f.descriptor for f in feats]))
            feats = [Feature(f.keypoint, mat[i], "real") for i, f in enumerate(feats)]
        map_feats = _to_map_frame(feats, pose)
        images.append(
            MapImage(
                image_id=image_id,
                pose=pose,
                width=width,
                height=height,
                features=map_feats,
                feature_id_offset=offset,
            )
        )
        offset += len(map_feats)
    return ReferenceMap(
        images=images,
        matching_variant=config.matching_variant,
        fingerprint=config_fingerprint(config),
        subsample_seed=subsample_seed,
        projection=projection,
    )


def build_map(
    images: list,
    config: ParameterConfig,
    subsample_seed: int = 0,
) -> ReferenceMap:
    """Extract features from (image, pose) pairs and assemble the map."""
    if not images:
        raise EmptyInputError("cannot build a map from zero images")
    entries = []
    for idx, (img, pose) in enumerate(images):
        feats = extract_image_features(img, config, subsample_seed=[subsample_seed, idx])
        entries.append((idx, pose, img.width, img.height, feats))
    return assemble_map(entries, config, subsample_seed=subsample_seed)


def nearby_reference_images(refmap: ReferenceMap, center: Pose2D, radius: float) -> list[int]:
    """Ids of reference images whose centers lie within ``radius`` of a pose.

    Sorted by ascending center distance (image id breaks exact ties).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    hits = []
    for im in refmap.images:
        cx, cy = im.center
        d = float(np.hypot(cx - center.x, cy - center.y))
        if d <= radius:
            hits.append((d, im.image_id))
    hits.sort()
    return [image_id for _, image_id in hits]


# ---------------------------------------------------------------------------
# persistence


def _write_array(fh, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    fh.write(struct.pack("<Q", len(data)))
    fh.write(data)


def _read_array(fh, dtype: str, shape) -> np.ndarray:
    (nbytes,) = struct.unpack("<Q", _read_exact(fh, 8))
    return np.frombuffer(_read_exact(fh, nbytes), dtype=dtype).reshape(shape).copy()


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise VersionMismatchError("map file is truncated")
    return data


def save_map(refmap: ReferenceMap, path) -> None:
    """Serialize a map to the versioned binary container."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    fp = refmap.fingerprint.encode("ascii")
    buf.write(struct.pack("<H", len(fp)))
    buf.write(fp)
    variant_code = 0 if refmap.matching_variant == "nearest" else 1
    buf.write(struct.pack("<Bq", variant_code, refmap.subsample_seed))
    if refmap.projection is not None:
        t, s = refmap.projection.components.shape
        buf.write(struct.pack("<BHH", 1, t, s))
        _write_array(buf, refmap.projection.mean, "<f8")
        _write_array(buf, refmap.projection.components, "<f8")
        sv = refmap.projection.singular_values
        _write_array(buf, sv if sv is not None else np.zeros(t), "<f8")
    else:
        buf.write(struct.pack("<BHH", 0, 0, 0))
    buf.write(struct.pack("<I", len(refmap.images)))
    for im in refmap.images:
        nfeat = len(im.features)
        buf.write(
            struct.pack(
                "<IdddIIIi",
                im.image_id,
                im.pose.x,
                im.pose.y,
                im.pose.theta,
                im.width,
                im.height,
                nfeat,
                im.feature_id_offset,
            )
        )
        kp = np.array(
            [[f.keypoint.x, f.keypoint.y, f.keypoint.orientation, f.keypoint.size, f.keypoint.response] for f in im.features],
            dtype=np.float64,
        ).reshape(nfeat, 5)
        _write_array(buf, kp, "<f8")
        if nfeat:
            desc = np.vstack([f.descriptor for f in im.features])
        else:
            desc = np.zeros((0, 0))
        if refmap.matching_variant == "nearest":
            buf.write(struct.pack("<H", desc.shape[1] if nfeat else 0))
            _write_array(buf, desc, "<f8")
        else:
            buf.write(struct.pack("<H", desc.shape[1] if nfeat else 0))
            _write_array(buf, desc, "u1")
    try:
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ImageIoError(f"cannot write map {path}: {exc}") from exc


def load_map(path, expected_fingerprint: str | None = None, override: bool = False) -> ReferenceMap:
    """Read a map container; checks magic, version, and fingerprint.

    A fingerprint mismatch raises unless ``override`` is set.
    """
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ImageIoError(f"cannot open map {path}: {exc}") from exc
    with fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise VersionMismatchError(f"{path}: not a texloc map file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != _VERSION:
            raise VersionMismatchError(f"{path}: unsupported map version {version}")
        (fplen,) = struct.unpack("<H", _read_exact(fh, 2))
        fingerprint = _read_exact(fh, fplen).decode("ascii")
        if expected_fingerprint is not None and fingerprint != expected_fingerprint and not override:
            raise FingerprintMismatchError(
                f"{path}: map fingerprint {fingerprint[:12]}... does not match the "
                f"session config {expected_fingerprint[:12]}..."
            )
        variant_code, subsample_seed = struct.unpack("<Bq", _read_exact(fh, 9))
        variant = "nearest" if variant_code == 0 else "identity"
        has_proj, t, s = struct.unpack("<BHH", _read_exact(fh, 5))
        projection = None
        if has_proj:
            mean = _read_array(fh, "<f8", (s,))
            comps = _read_array(fh, "<f8", (t, s))
            svals = _read_array(fh, "<f8", (t,))
            projection = Projection(mean=mean, components=comps, singular_values=svals)
        (n_images,) = struct.unpack("<I", _read_exact(fh, 4))
        images = []
        for _ in range(n_images):
            image_id, px, py, pth, width, height, nfeat, offset = struct.unpack(
                "<IdddIIIi", _read_exact(fh, 4 + 24 + 4 + 4 + 4 + 4)
            )
            kp = _read_array(fh, "<f8", (nfeat, 5))
            (dim,) = struct.unpack("<H", _read_exact(fh, 2))
            if variant == "nearest":
                desc = _read_array(fh, "<f8", (nfeat, dim) if nfeat else (0,))
                kind = "real"
            else:
                desc = _read_array(fh, "u1", (nfeat, dim) if nfeat else (0,))
                kind = "bits"
            feats = [
                Feature(Keypoint(*kp[i]), desc[i], kind)
                for i in range(nfeat)
            ]
            images.append(
                MapImage(
                    image_id=image_id,
                    pose=Pose2D(px, py, pth),
                    width=width,
                    height=height,
                    features=feats,
                    feature_id_offset=offset,
                )
            )
    return ReferenceMap(
        images=images,
        matching_variant=variant,
        fingerprint=fingerprint,
        subsample_seed=subsample_seed,
        projection=projection,
    )


def export_map_json(refmap: ReferenceMap, path) -> None:
    """Human-readable structured-text dump of a map (debugging aid)."""
    doc = {
        "matching_variant": refmap.matching_variant,
        "fingerprint": refmap.fingerprint,
        "subsample_seed": refmap.subsample_seed,
        "num_images": len(refmap.images),
        "num_features": refmap.num_features,
        "images": [
            {
                "id": im.image_id,
                "pose": [im.pose.x, im.pose.y, im.pose.theta],
                "size": [im.width, im.height],
                "feature_id_offset": im.feature_id_offset,
                "features": [
                    {
                        "keypoint": [f.keypoint.x, f.keypoint.y, f.keypoint.orientation, f.keypoint.size],
                        "descriptor": np.asarray(f.descriptor).tolist(),
                    }
                    for f in im.features
                ],
            }
            for im in refmap.images
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
