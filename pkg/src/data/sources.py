"""
Example sources: the interface a dataset adapter implements, with one
backed by a dataset file and one generating examples in memory.
"""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterator, List, Optional, Union

from src.body.asset import BodyModelAsset
from src.data.labels import LabeledExample
from src.data.synth_data import DatasetManifest, generate, read_dataset

logger = logging.getLogger(__name__)


class ExampleSource(ABC):
    def __init__(self, source_name: str):
        self.source_name = source_name
        self._examples: Optional[List[LabeledExample]] = None

    @abstractmethod
    def load(self) -> List[LabeledExample]:
        """Produce every example of the source"""
        pass

    def examples(self) -> List[LabeledExample]:
        if self._examples is None:
            self._examples = self.load()
            logger.info(f"{self.source_name}: {len(self._examples)} examples")
        return self._examples

    def labelled_3d(self) -> List[LabeledExample]:
        return [ex for ex in self.examples() if ex.has_3d]

    def __len__(self) -> int:
        return len(self.examples())

    def __getitem__(self, index: int) -> LabeledExample:
        return self.examples()[index]

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples())


class RecordFileSource(ExampleSource):
    def __init__(self, path: Union[str, Path], asset: Optional[BodyModelAsset] = None):
        super().__init__(f"file:{Path(path).name}")
        self.path = Path(path)
        self.asset = asset

    def load(self) -> List[LabeledExample]:
        return read_dataset(self.path, self.asset)


class SyntheticExampleSource(ExampleSource):
    def __init__(self, manifest: DatasetManifest, asset: BodyModelAsset, split: str = 'train'):
        super().__init__(f"synthetic:{split}")
        self.manifest = manifest
        self.asset = asset
        self.split = split

    def load(self) -> List[LabeledExample]:
        return generate(self.manifest, self.asset, self.split)
