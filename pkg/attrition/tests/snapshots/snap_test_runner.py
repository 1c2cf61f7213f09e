# -*- coding: utf-8 -*-
# snapshottest: v1 - https://goo.gl/zC4yUc
from __future__ import unicode_literals

from snapshottest import Snapshot


snapshots = Snapshot()

snapshots['TestMollify::test_dirac_at_half 1'] = '''mass of H(m, 0.5): 0.5
'''
