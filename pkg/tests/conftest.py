import numpy as np
import pytest

from secagg.datastore import Dataset

# The 1024-bit group keeps unit tests quick; the default 2048-bit group
# is exercised where realism matters (acceptance, group unit tests).
FAST_GROUP = "modp-1024"


def make_dataset(values, party_id=0, bound=10 ** 6):
    return Dataset(values=np.array(values, dtype=np.int64),
                   party_id=party_id, bound=bound)


@pytest.fixture
def tmp_csv(tmp_path):
    return tmp_path / "out.csv"
