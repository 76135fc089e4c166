"""Artifact and configuration paths, local or on S3."""
import os
import shutil
import tempfile
import logging
from urllib.parse import urlparse

import boto3


LOGGER = logging.getLogger(__name__)


def is_s3_url(url):
    """Check whether the provided path is an s3 url.

    :param url: the S3 URL to check
    :return: `True` if the URL points to an S3 bucket key, `False` otherwise.
    """
    return urlparse(url).scheme == 's3'


def is_local_path(path):
    """Check whether the provided path is local.

    :param path: the local path to check
    :return: `True` if the path points to a local filesystem, `False`
        otherwise.
    """
    return urlparse(path).scheme in ['', 'file']


def _bucket_key(url):
    parsed_url = urlparse(url)
    return parsed_url.netloc, parsed_url.path.lstrip('/')


def join_path(directory, name):
    """Join an artifact name to a local directory or an S3 prefix."""
    if is_s3_url(directory):
        return '%s/%s' % (directory.rstrip('/'), name)
    return os.path.join(directory, name)


def upload_file(src_path, dst_url):
    """Upload a local file on S3, overwriting any existing key.

    :param src_path: Source local filesystem path
    :param dst_url: Destination S3 URL
    """
    bucket, key = _bucket_key(dst_url)
    boto3.client('s3').upload_file(src_path, bucket, key)


def download_file(src_url, dst_path):
    """Download a S3 URL to a local file, overwriting it.

    :param src_url: Source S3 URL to download
    :param dst_path: Destination local path
    """
    bucket, key = _bucket_key(src_url)
    boto3.resource('s3').Bucket(bucket).download_file(key, dst_path)


def _s3_path_exists(path):
    """Return if an S3 key exists.

    :param path: s3 URL (Example: s3://bucket/run/obstacle.csv)
    """
    bucket, key = _bucket_key(path)
    result = boto3.client('s3').list_objects(Bucket=bucket, Prefix=key)
    return any(item['Key'] == key for item in result.get('Contents', []))


def remove_path(path):
    """Remove an artifact.

    :param path: Path or s3 URL
    """
    if is_s3_url(path):
        bucket, key = _bucket_key(path)
        boto3.client('s3').delete_object(Bucket=bucket, Key=key)
    elif is_local_path(path):
        os.remove(path)
    else:
        raise ValueError("Invalid path %s" % path)


def path_exists(path):
    """Return if an artifact already exists.

    :param path: Path or s3 URL
    """
    if is_s3_url(path):
        return _s3_path_exists(path)

    if is_local_path(path):
        return os.path.exists(path)

    raise ValueError("Invalid path %s" % path)


def path_is_readable_file(path):
    """Return if a configuration file exists and can be read.

    :param path: Path or s3 URL
    """
    if is_s3_url(path):
        return _s3_path_exists(path)

    if is_local_path(path):
        return os.path.isfile(path) and os.access(path, os.R_OK)

    raise ValueError("Invalid path %s" % path)


def create_writable_directory(path):
    """Create an output directory if it does not exist.

    Does nothing for an s3 URL, S3 having no directories.

    :param path: Path or s3 URL (Example: s3://bucket/run/ or /data/run/)
    :raise ValueError: if the local directory is not writable.
    """
    if not is_local_path(path):
        return

    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ValueError('No write access to output directory: %s' % path)


class LocalFile():
    """Context manager to get a local file indifferently from local or S3."""

    def __init__(self, path, upload=False):
        """

        :param path: Path or s3 URL (Example: s3://bucket/run/summary.txt)
        :param upload: boolean used to upload local file back to S3 at the
                       end. Default: False
        """
        self.tmpdir = None
        self.path = path
        self.filename = os.path.realpath(path)
        self.upload = False

        if is_s3_url(path):
            basename = path.split('/')[-1]
            self.upload = upload
            self.tmpdir = tempfile.mkdtemp(prefix='gap-afem-')
            self.filename = os.path.join(self.tmpdir, basename)

            if _s3_path_exists(path):
                LOGGER.debug("Downloading %s to %s", self.path, self.filename)
                download_file(self.path, self.filename)

    def __enter__(self):
        return self.filename

    def __exit__(self, exc_type, *args):
        if self.tmpdir:
            # Partial artifacts are uploaded as well
            if self.upload and os.path.exists(self.filename):
                LOGGER.debug("Uploading %s to %s", self.filename, self.path)
                upload_file(self.filename, self.path)

            shutil.rmtree(self.tmpdir)


def disable_s3_verbose_logging():
    """Disable S3 verbose logging."""
    # Connection and credential messages are logged at INFO level
    logging.getLogger('botocore').setLevel(logging.WARNING)
    logging.getLogger('s3transfer').setLevel(logging.INFO)
    logging.getLogger('boto3').setLevel(logging.INFO)
