"""weights of the detector and their checkpoint container"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional

import attr
import numpy as np
from toolz import valmap

from ..errors import ConfigError
from ..gradcore import Tensor
from .config import DetectorConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@attr.s(auto_attribs=True, frozen=True, eq=False)
class DetectorParams:
    """named weight arrays of a :class:`DetectorConfig` network

    Block b contributes 'conv{b}.w' (C_out, C_in, k, k) and 'conv{b}.b';
    the 1x1 head contributes 'head.w' and 'head.b'.

    """

    config: DetectorConfig
    arrays: Dict[str, np.ndarray]

    @classmethod
    def initialize(cls, config: DetectorConfig, seed: int = 0,
                   scheme: str = 'he') -> 'DetectorParams':
        """He-normal kernels with zero biases, or all zeros

        The objectness bias starts at -4 under 'he' so that the
        untrained grid predicts mostly background.

        """

        rng = np.random.default_rng(seed)
        k = config.kernel
        shapes = {}
        c_in = 3
        for b, c_out in enumerate(config.channels, 1):
            shapes[f'conv{b}.w'] = (c_out, c_in, k, k)
            shapes[f'conv{b}.b'] = (c_out,)
            c_in = c_out
        shapes['head.w'] = (config.head_channels, c_in, 1, 1)
        shapes['head.b'] = (config.head_channels,)

        if scheme == 'zero':
            return cls(config, {n: np.zeros(s) for n, s in shapes.items()})
        if scheme != 'he':
            raise ConfigError(f'unknown initialization {scheme!r}')

        arrays = {}
        for name, shape in shapes.items():
            if name.endswith('.b'):
                arrays[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                arrays[name] = rng.normal(0., np.sqrt(2. / fan_in), shape)
        arrays['head.w'] *= 0.1
        arrays['head.b'][4] = -4.
        return cls(config, arrays)

    def leaves(self, requires_grad: bool = True) -> Dict[str, Tensor]:
        return {n: Tensor(a, requires_grad=requires_grad)
                for n, a in self.arrays.items()}

    def replace(self, arrays: Dict[str, np.ndarray]) -> 'DetectorParams':
        return attr.evolve(self, arrays=arrays)

    def copy(self) -> 'DetectorParams':
        return self.replace(valmap(np.copy, self.arrays))

    @property
    def digest(self) -> str:
        """SHA-256 over names, shapes, and bytes of every array"""

        h = hashlib.sha256()
        for name in sorted(self.arrays):
            a = np.ascontiguousarray(self.arrays[name], dtype=np.float64)
            h.update(name.encode())
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        return h.hexdigest()

    def save(self, path, meta: Optional[dict] = None,
             extra: Optional[Dict[str, np.ndarray]] = None):
        """write an .npz checkpoint

        :param meta: JSON-serializable dict stored in the header

        :param extra: further named arrays, e.g. optimizer state;
        stored under the prefix 'extra/'

        """

        header = {'format_version': FORMAT_VERSION,
                  'config': self.config.to_dict(),
                  'config_digest': self.config.digest,
                  'meta': meta or {}}
        payload = {f'param/{n}': a for n, a in self.arrays.items()}
        payload.update({f'extra/{n}': a for n, a in (extra or {}).items()})
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as f:
            np.savez(f, header=np.array(json.dumps(header)), **payload)
        logger.debug('saved checkpoint %s', path)

    @classmethod
    def load(cls, path, config: Optional[DetectorConfig] = None):
        """read a checkpoint written by :meth:`save`

        :param config: if given, the checkpoint's config digest must
        match it, else ConfigError

        :rtype: (DetectorParams, meta dict, extra arrays dict)

        """

        with np.load(path) as data:
            header = json.loads(str(data['header']))
            if header.get('format_version') != FORMAT_VERSION:
                raise ConfigError(
                    f'{path}: unsupported checkpoint format '
                    f'{header.get("format_version")}')
            stored = DetectorConfig.from_dict(header['config'])
            if header['config_digest'] != stored.digest:
                raise ConfigError(f'{path}: corrupt config digest')
            if config is not None and config.digest != stored.digest:
                raise ConfigError(
                    f'{path}: checkpoint config digest '
                    f'{stored.digest[:12]} does not match {config.digest[:12]}')
            arrays, extra = {}, {}
            for key in data.files:
                if key.startswith('param/'):
                    arrays[key[6:]] = data[key]
                elif key.startswith('extra/'):
                    extra[key[6:]] = data[key]
        return cls(stored, arrays), header['meta'], extra
