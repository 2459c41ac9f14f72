import hashlib
import json
import logging
import os

import numpy as np
import pandas as pd
import tables as tb

from aslchamp.errors import EmptyDataset, ShapeMismatch

logger = logging.getLogger(__name__)


def dataset_fingerprint(ds, class_names, encoding, t_max):
    '''Digest of a dataset's content plus the settings used to encode it.

    Returns
    -------
    str
        Hex BLAKE2b digest. Two datasets with equal samples and equal
        encoding settings give the same fingerprint.
    '''
    h = hashlib.blake2b(digest_size=16)
    settings = {'classes': list(class_names), 't_max': int(t_max),
            'presence_flags': encoding.presence_flags,
            'center': encoding.center,
            'rotation_scale': encoding.rotation_scale,
            'dtype': encoding.dtype}
    h.update(json.dumps(settings, sort_keys=True).encode('utf-8'))
    for s in ds:
        h.update('{}|{}|{}|{!r}'.format(s.label, s.signer_id, s.handedness,
            s.duration_s).encode('utf-8'))
        for arr in (s.timestamps, s.joints, s.hand_rotation,
                s.hand_present, s.joint_counts):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


class FeatureStore(pd.HDFStore):
    '''An HDF cache of encoded feature tensors.

    Parameters
    ----------
    hdfname : str
        The name of the HDF storage file. If the file does not exist, it will
        be created, or else the existing file will be opened in an appending
        mode (``mode='a'``).

    Notes
    -----
    This is a subclass of Pandas' HDFStore class. Each stored split is a
    group under ``/features`` holding ``X``, ``y`` and ``mask_len`` arrays;
    the split's labels are also kept as a DataFrame under
    ``labels/<name>``.
    '''
    def __init__(self, hdfname, **kwargs):
        if not 'mode' in kwargs:
            kwargs['mode'] = 'a'
        if not 'complevel' in kwargs:
            kwargs['complevel'] = 9
        if not 'complib' in kwargs:
            kwargs['complib'] = 'blosc'
        super(FeatureStore, self).__init__(hdfname, **kwargs)

        if not hasattr(self._handle.root, 'features'):
            self._handle.create_group('/', 'features', filters=self._filters)
        self.features = self._handle.root.features

    @property
    def names(self):
        return sorted(group._v_name for group in self.features)

    def append_features(self, name, X, y, fingerprint, mask_len=None,
            class_names=()):
        '''Store an encoded split.

        Parameters
        ----------
        name : str
            Split name, e.g. ``'train'``.

        X, y, mask_len : ndarray
            Feature tensor (N, t_max, D), class positions and real row
            counts.

        fingerprint : str
            Identifies the data and encoding. If a split of this name is
            stored with the same fingerprint nothing is written; a different
            fingerprint replaces it.

        Returns
        -------
        bool
            True if the split was written.
        '''
        name = self._name_fix(name)
        X = np.asarray(X)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise EmptyDataset("Refusing to cache an empty split")
        if len(y) != len(X):
            raise ShapeMismatch("{} feature rows but {} labels".format(
                len(X), len(y)))
        if mask_len is None:
            mask_len = np.full(len(X), X.shape[1], dtype=np.int64)

        if hasattr(self.features, name):
            different = self._check_fingerprint(name, fingerprint)
            if not different:
                logger.info("HDF Skipping: %s", name)
                return False

        logger.info("HDF Appending: %s", name)
        group = self._handle.create_group('/features', name,
                filters=self._filters)
        self._handle.create_carray(group, 'X', obj=X)
        self._handle.create_carray(group, 'y', obj=y)
        self._handle.create_carray(group, 'mask_len',
                obj=np.asarray(mask_len, dtype=np.int64))
        group._v_attrs['featureinfo'] = {
            'fingerprint': fingerprint,
            'class_names': list(class_names),
            'shape': list(X.shape),
        }
        if class_names:
            labels = pd.DataFrame({'code': y,
                'label': [class_names[k] for k in y]})
            self.put('labels/' + name, labels)
        self.flush()
        return True

    def has_features(self, name, fingerprint):
        name = self._name_fix(name)
        if not hasattr(self.features, name):
            return False
        info = getattr(self.features, name)._v_attrs.featureinfo
        return info['fingerprint'] == fingerprint

    def extract_features(self, name):
        '''Read a stored split.

        Returns
        -------
        X, y, mask_len : ndarray
        info : dict
            Fingerprint, class names and shape.
        '''
        name = self._name_fix(name)
        group = getattr(self.features, name)
        return (group.X[:], group.y[:], group.mask_len[:],
                dict(group._v_attrs.featureinfo))

    def compress(self, ):
        '''Close and compress the HDF file.

        Notes
        -----
        Replacing splits leaves dead space in the file; the copy drops it.
        '''
        self.close()
        tb.copy_file(self.filename, self.filename+'temp', overwrite=True)
        os.remove(self.filename)
        os.rename(self.filename+'temp', self.filename)

    def _check_fingerprint(self, name, fingerprint):
        '''Remove the stored split if its fingerprint differs.

        Returns
        -------
        bool
            True if the stored split was removed.
        '''
        group = getattr(self.features, name)
        info = group._v_attrs.featureinfo
        if info.get('fingerprint') == fingerprint:
            return False
        logger.warning("HDF Removing: %s (fingerprint changed)", name)
        group._f_remove(recursive=True)
        if 'labels/' + name in self:
            self.remove('labels/' + name)
        return True

    def _name_fix(self, badname):
        '''Make a split name usable with PyTables natural naming.'''
        name = str(badname).replace('-', '_').replace(' ', '_')
        name = name.replace('.', '_').replace('/', '_')
        if not name or name[0].isdigit():
            name = 'num' + name
        return name
