# -*- coding: utf-8 -*-
# License: BSD 3 clause
"""Base class for fitted models and trackers.

Objects follow the scikit-learn parameter protocol: constructor arguments are
the parameters (`get_params`/`set_params`), quantities estimated from data
are attributes ending with an underscore.
"""
import logging
from inspect import signature

import numpy

from tactev.exceptions import InvalidInputError

logger = logging.getLogger(__name__)


class BaseEstimator:
    """Parameter handling and repr for tactev estimators.

    >>> model = LinearForceModel(fit_intercept=True)
    >>> model.get_params()
    {'fit_intercept': True, 'rcond': 1e-10}
    >>> model.fit(displacements, forces).coef_  #doctest: +SKIP
    """

    @classmethod
    def _get_param_names(cls):
        """Names of the constructor arguments, sorted.

        Raises
        ------
        InvalidInputError
            If the constructor takes *args.
        """
        init = cls.__init__
        if init is object.__init__:
            return []
        parameters = [
            p for p in signature(init).parameters.values()
            if p.name != 'self' and p.kind != p.VAR_KEYWORD
        ]
        for p in parameters:
            if p.kind == p.VAR_POSITIONAL:
                raise InvalidInputError(
                    '%s must declare its parameters explicitly in __init__ '
                    '(no varargs).' % cls.__name__)
        return sorted(p.name for p in parameters)

    def get_params(self):
        """Parameter names mapped to their values."""
        return {key: getattr(self, key, None)
                for key in self._get_param_names()}

    def set_params(self, **params):
        """Set parameters.

        Returns
        -------
        self

        Raises
        ------
        InvalidInputError
            When setting an unknown parameter.
        """
        valid = self._get_param_names()
        for key, value in params.items():
            if key not in valid:
                raise InvalidInputError(
                    'Invalid parameter %s for %s. Check the list of available '
                    'parameters with `get_params().keys()`.' %
                    (key, type(self).__name__))
            setattr(self, key, value)
        return self

    def __repr__(self):
        class_name = type(self).__name__
        return '%s(%s)' % (class_name,
                           _pprint(self.get_params(),
                                   offset=len(class_name)))


def _pprint(params, offset=0):
    """Justified multi-line repr of a parameter dict."""
    with numpy.printoptions(precision=5, threshold=64, edgeitems=2):
        chunks = []
        line_length = offset
        line_sep = ',\n' + (1 + offset // 2) * ' '
        for i, (k, v) in enumerate(sorted(params.items())):
            this_repr = '%s=%s' % (k, str(v) if isinstance(v, float) else
                                   repr(v))
            if len(this_repr) > 500:
                this_repr = this_repr[:300] + '...' + this_repr[-100:]
            if i > 0:
                if line_length + len(this_repr) >= 75 or '\n' in this_repr:
                    chunks.append(line_sep)
                    line_length = len(line_sep)
                else:
                    chunks.append(', ')
                    line_length += 2
            chunks.append(this_repr)
            line_length += len(this_repr)
    return '\n'.join(l.rstrip(' ') for l in ''.join(chunks).split('\n'))
