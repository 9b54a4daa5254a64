from collections.abc import Callable
from pathlib import Path
import logging

from django.core.cache import cache

from .assets import load_point_cloud, load_sdf_grid
from .geometry import SdfGrid, SurfaceCloud

logger = logging.getLogger(__name__)


class AbstractAssetCache[Asset]:
    """
    Memoizes a parsed asset file in Django's cache. Entries are keyed by the absolute
    path and the file's modification time, so editing an asset invalidates it.
    """

    cache_timeout: int = 60 * 60  # 1 hour

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path).resolve()

    @property
    def cache_key(self) -> str:
        try:
            mtime = self.path.stat().st_mtime_ns
        except OSError:
            mtime = 0
        return f"stocs.cache.{self.__class__.__name__}.{self.path}.{mtime}"

    def get(self) -> Asset:
        key = self.cache_key
        asset: Asset | None = cache.get(key)
        if asset is None:
            asset = self.load()
            cache.set(key, asset, self.cache_timeout)
        else:
            logger.debug("Loaded %s[%s] from cache.", self.__class__.__name__, self.path)
        return asset

    def invalidate(self) -> None:
        cache.delete(self.cache_key)

    def load(self) -> Asset:
        return self._get_loader()(self.path)

    def _get_loader(self) -> Callable[[Path], Asset]:
        raise NotImplementedError("Subclass must implement _get_loader")


class PointCloudCache(AbstractAssetCache[SurfaceCloud]):
    def _get_loader(self) -> Callable[[Path], SurfaceCloud]:
        return load_point_cloud


class SdfGridCache(AbstractAssetCache[SdfGrid]):
    def _get_loader(self) -> Callable[[Path], SdfGrid]:
        return load_sdf_grid
