from src.data.volume import (
    Modality,
    NormRecord,
    Resampling,
    Volume,
    crop,
    denormalize,
    downsample,
    minmax_normalize,
    patchify,
    read_volume,
    unpatchify,
    upsample,
    write_volume,
    zero_pad,
)
from src.data.dataset import (
    Direction,
    PairedDataset,
    Split,
    load_split,
    patch_pairs,
    read_manifest,
    split,
    split_dataset,
    split_sizes,
    write_manifest,
)
from src.data.phantom import phantom_pair, write_corpus
